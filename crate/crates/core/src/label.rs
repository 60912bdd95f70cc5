use core::fmt;

/// A two-class probability vector ordered `(negative, positive)`.
pub type Probs = [f64; 2];

/// Binary diagnosis: `Negative` = non-disease (0), `Positive` = disease (1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Positive
        } else {
            Label::Negative
        }
    }

    /// Parses `0` / `1`.
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// Class index in a [`Probs`] vector.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn as_f64(self) -> f64 {
        self as u8 as f64
    }

    pub fn flip(self) -> Self {
        Label::from_bool(!self.is_positive())
    }

    pub fn one_hot(self) -> Probs {
        match self {
            Label::Negative => [1.0, 0.0],
            Label::Positive => [0.0, 1.0],
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}
