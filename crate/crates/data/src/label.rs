use std::fmt;
use std::str::FromStr;

use crate::error::DataError;

pub const NUM_CLASSES: usize = 7;

/// Anomaly class of an episode. The discriminant is the class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    /// no anomaly
    Safe,
    /// object moved by someone else
    Loc,
    /// object removed
    Dis,
    /// earlier unstable action collapses a stack
    Eua,
    /// object overturns during a push
    Ota,
    /// spill while pouring
    Spc,
    /// object falls from a full container
    Fca,
}

impl Label {
    pub const ALL: [Label; NUM_CLASSES] = [
        Label::Safe,
        Label::Loc,
        Label::Dis,
        Label::Eua,
        Label::Ota,
        Label::Spc,
        Label::Fca,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Label::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Safe => "SAFE",
            Label::Loc => "LOC",
            Label::Dis => "DIS",
            Label::Eua => "EUA",
            Label::Ota => "OTA",
            Label::Spc => "SPC",
            Label::Fca => "FCA",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DataError::Input(format!("unknown class label {s:?}")))
    }
}

/// Image quadrant, in unit coordinates with the origin at the top left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Quadrant::TopLeft => "tl",
            Quadrant::TopRight => "tr",
            Quadrant::BottomLeft => "bl",
            Quadrant::BottomRight => "br",
        }
    }

    /// Center in unit coordinates `(x, y)`.
    pub fn center(self) -> (f64, f64) {
        match self {
            Quadrant::TopLeft => (0.25, 0.25),
            Quadrant::TopRight => (0.75, 0.25),
            Quadrant::BottomLeft => (0.25, 0.75),
            Quadrant::BottomRight => (0.75, 0.75),
        }
    }

    /// Whether pixel `(x, y)` of an `h × w` grid lies in this quadrant.
    pub fn contains(self, x: usize, y: usize, w: usize, h: usize) -> bool {
        let right = 2 * x >= w;
        let bottom = 2 * y >= h;
        match self {
            Quadrant::TopLeft => !right && !bottom,
            Quadrant::TopRight => right && !bottom,
            Quadrant::BottomLeft => !right && bottom,
            Quadrant::BottomRight => right && bottom,
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Quadrant {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.as_str() == s.trim())
            .ok_or_else(|| DataError::Input(format!("unknown quadrant {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        for (i, l) in Label::ALL.into_iter().enumerate() {
            assert_eq!(l.index(), i);
            assert_eq!(l.as_str().parse::<Label>().unwrap(), l);
            assert_eq!(Label::from_index(i), Some(l));
        }
        assert!("XYZ".parse::<Label>().is_err());
        assert_eq!("fca".parse::<Label>().unwrap(), Label::Fca);
    }

    #[test]
    fn quadrants_partition_the_grid() {
        for (w, h) in [(32, 32), (7, 5)] {
            for y in 0..h {
                for x in 0..w {
                    let n = Quadrant::ALL.iter().filter(|q| q.contains(x, y, w, h)).count();
                    assert_eq!(n, 1);
                }
            }
        }
    }
}
