use core::fmt;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Activity category; also the purpose of the trip that ends at it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActivityType {
    Home,
    Work,
    School,
    Shopping,
    Other,
}

impl ActivityType {
    pub const ALL: [ActivityType; 5] = [
        ActivityType::Home,
        ActivityType::Work,
        ActivityType::School,
        ActivityType::Shopping,
        ActivityType::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivityType::Home => "HOME",
            ActivityType::Work => "WORK",
            ActivityType::School => "SCHOOL",
            ActivityType::Shopping => "SHOPPING",
            ActivityType::Other => "OTHER",
        }
    }

    /// Parses the upper-case tag or the lower-case name (`home`, `work`, ...).
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        ActivityType::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
    }

    /// Single-letter code used in compact chain notation (`H`, `W`, `E`, `S`, `O`).
    pub fn code(self) -> char {
        match self {
            ActivityType::Home => 'H',
            ActivityType::Work => 'W',
            ActivityType::School => 'E',
            ActivityType::Shopping => 'S',
            ActivityType::Other => 'O',
        }
    }

    /// Work and school locations are drawn once per agent and then kept.
    pub fn is_fixed_location(self) -> bool {
        matches!(self, ActivityType::Work | ActivityType::School)
    }
}

impl fmt::Display for ActivityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One value per trip purpose.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerPurpose<T> {
    pub home: T,
    pub work: T,
    pub school: T,
    pub shopping: T,
    pub other: T,
}

impl<T> PerPurpose<T> {
    pub fn from_fn(mut f: impl FnMut(ActivityType) -> T) -> Self {
        PerPurpose {
            home: f(ActivityType::Home),
            work: f(ActivityType::Work),
            school: f(ActivityType::School),
            shopping: f(ActivityType::Shopping),
            other: f(ActivityType::Other),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(ActivityType, &T) -> U) -> PerPurpose<U> {
        PerPurpose::from_fn(|p| f(p, &self[p]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ActivityType, &T)> {
        ActivityType::ALL.into_iter().map(move |p| (p, &self[p]))
    }
}

impl<T> Index<ActivityType> for PerPurpose<T> {
    type Output = T;

    fn index(&self, p: ActivityType) -> &T {
        match p {
            ActivityType::Home => &self.home,
            ActivityType::Work => &self.work,
            ActivityType::School => &self.school,
            ActivityType::Shopping => &self.shopping,
            ActivityType::Other => &self.other,
        }
    }
}

impl<T> IndexMut<ActivityType> for PerPurpose<T> {
    fn index_mut(&mut self, p: ActivityType) -> &mut T {
        match p {
            ActivityType::Home => &mut self.home,
            ActivityType::Work => &mut self.work,
            ActivityType::School => &mut self.school,
            ActivityType::Shopping => &mut self.shopping,
            ActivityType::Other => &mut self.other,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Weekday {
    Mo,
    Tu,
    We,
    Th,
    Fr,
    Sa,
    Su,
    Undefined,
}

impl Weekday {
    pub const DAYS: [Weekday; 7] = [
        Weekday::Mo,
        Weekday::Tu,
        Weekday::We,
        Weekday::Th,
        Weekday::Fr,
        Weekday::Sa,
        Weekday::Su,
    ];

    /// Next day modulo 7; `Undefined` stays `Undefined`.
    pub fn next(self) -> Weekday {
        match self {
            Weekday::Undefined => Weekday::Undefined,
            d => Weekday::DAYS[(d as usize + 1) % 7],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Weekday::Mo => "MO",
            Weekday::Tu => "TU",
            Weekday::We => "WE",
            Weekday::Th => "TH",
            Weekday::Fr => "FR",
            Weekday::Sa => "SA",
            Weekday::Su => "SU",
            Weekday::Undefined => "UNDEFINED",
        }
    }

    pub fn parse(s: &str) -> Option<Weekday> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("undefined") {
            return Some(Weekday::Undefined);
        }
        Weekday::DAYS
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s) || full_name(*d).eq_ignore_ascii_case(s))
    }
}

fn full_name(d: Weekday) -> &'static str {
    match d {
        Weekday::Mo => "monday",
        Weekday::Tu => "tuesday",
        Weekday::We => "wednesday",
        Weekday::Th => "thursday",
        Weekday::Fr => "friday",
        Weekday::Sa => "saturday",
        Weekday::Su => "sunday",
        Weekday::Undefined => "undefined",
    }
}

impl fmt::Display for Weekday {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
