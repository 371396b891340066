//! On-disk JSON layout of an [`Integrand`].
//!
//! ```json
//! {
//!   "dimension": 1,
//!   "scales": 1,
//!   "form": "composite",
//!   "sets": [{"interval": {"lo": [0], "hi": [{"num": 1, "den": 2}]}}],
//!   "laws": {"inside": {"power_iso": {"coef": {"const": 1}}},
//!            "outside": {"power_iso": {"coef": {"const": 4}}}},
//!   "growth": {"c1": 1, "c2": 4, "p": 2}
//! }
//! ```
//!
//! `form` is `"simple"` (law under `laws.simple`), `"composite"` (one set
//! per scale, `laws.inside` / `laws.outside`) or
//! `{"borel_diagonal": {"variant": "final_uno", "i_max": 64}}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BorelVariant, Form, GrowthBounds, Integrand, MaterialLaw};
use crate::cellset::CellSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrandFile {
    pub dimension: usize,
    pub scales: usize,
    pub form: FormTag,
    #[serde(default)]
    pub sets: Vec<CellSet>,
    #[serde(default)]
    pub laws: Laws,
    pub growth: GrowthBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FormTag {
    Simple,
    Composite,
    BorelDiagonal { variant: BorelVariant, i_max: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Laws {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simple: Option<MaterialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inside: Option<MaterialLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outside: Option<MaterialLaw>,
}

impl TryFrom<IntegrandFile> for Integrand {
    type Error = Error;

    fn try_from(f: IntegrandFile) -> Result<Self> {
        let missing = |w: &str| Error::Invalid(format!("laws.{w} is required for this form"));
        let form = match f.form {
            FormTag::Simple => {
                if !f.sets.is_empty() || f.laws.inside.is_some() || f.laws.outside.is_some() {
                    return Err(Error::Invalid("simple form takes only laws.simple".into()));
                }
                Form::Simple(f.laws.simple.ok_or_else(|| missing("simple"))?)
            }
            FormTag::Composite => {
                if f.laws.simple.is_some() {
                    return Err(Error::Invalid("composite form takes laws.inside and laws.outside".into()));
                }
                Form::Composite {
                    sets: f.sets,
                    inside: f.laws.inside.ok_or_else(|| missing("inside"))?,
                    outside: f.laws.outside.ok_or_else(|| missing("outside"))?,
                }
            }
            FormTag::BorelDiagonal { variant, i_max } => {
                if !f.sets.is_empty() || f.laws != Laws::default() {
                    return Err(Error::Invalid("borel_diagonal form takes no sets or laws".into()));
                }
                Form::BorelDiagonal { variant, i_max }
            }
        };
        Integrand::from_parts(f.dimension, f.scales, form, f.growth)
    }
}

impl From<Integrand> for IntegrandFile {
    fn from(f: Integrand) -> Self {
        let (form, sets, laws) = match f.form {
            Form::Simple(l) => (FormTag::Simple, vec![], Laws { simple: Some(l), ..Default::default() }),
            Form::Composite { sets, inside, outside } => (
                FormTag::Composite,
                sets,
                Laws { inside: Some(inside), outside: Some(outside), ..Default::default() },
            ),
            Form::BorelDiagonal { variant, i_max } => {
                (FormTag::BorelDiagonal { variant, i_max }, vec![], Laws::default())
            }
        };
        IntegrandFile { dimension: f.dim, scales: f.scales, form, sets, laws, growth: f.growth }
    }
}

impl Integrand {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("integrand serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
