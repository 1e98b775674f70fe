use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Color spaces usable as model inputs or reconstruction targets.
///
/// Composite spaces list the RGB channels first and append the channels of
/// the second space after them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ColorSpace {
    Rgb,
    Hsv,
    Lab,
    Gray,
    R,
    RgbS,
    RgbSv,
    RgbHsv,
}

impl ColorSpace {
    pub const ALL: [ColorSpace; 8] = [
        ColorSpace::Rgb,
        ColorSpace::Hsv,
        ColorSpace::Lab,
        ColorSpace::Gray,
        ColorSpace::R,
        ColorSpace::RgbS,
        ColorSpace::RgbSv,
        ColorSpace::RgbHsv,
    ];

    pub fn id(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Hsv => "HSV",
            ColorSpace::Lab => "LAB",
            ColorSpace::Gray => "GRAY",
            ColorSpace::R => "R",
            ColorSpace::RgbS => "RGB-S",
            ColorSpace::RgbSv => "RGB-SV",
            ColorSpace::RgbHsv => "RGB-HSV",
        }
    }

    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            ColorSpace::Rgb => &["R", "G", "B"],
            ColorSpace::Hsv => &["H", "S", "V"],
            ColorSpace::Lab => &["L*", "a*", "b*"],
            ColorSpace::Gray => &["Y"],
            ColorSpace::R => &["R"],
            ColorSpace::RgbS => &["R", "G", "B", "S"],
            ColorSpace::RgbSv => &["R", "G", "B", "S", "V"],
            ColorSpace::RgbHsv => &["R", "G", "B", "H", "S", "V"],
        }
    }

    pub fn channel_count(self) -> usize {
        self.channel_names().len()
    }

    pub fn is_composite(self) -> bool {
        matches!(self, ColorSpace::RgbS | ColorSpace::RgbSv | ColorSpace::RgbHsv)
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ColorSpace {
    type Err = Error;

    /// Case-insensitive; accepts `RGB-S` as well as `rgb_s`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        ColorSpace::ALL
            .into_iter()
            .find(|c| c.id() == norm)
            .ok_or_else(|| Error::UnknownColorSpace(s.to_string()))
    }
}

impl TryFrom<String> for ColorSpace {
    type Error = Error;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<ColorSpace> for String {
    fn from(value: ColorSpace) -> Self {
        value.id().to_string()
    }
}
