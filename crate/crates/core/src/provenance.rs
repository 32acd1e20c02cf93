//! Source tags attached to every reported number.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "paper-closed-form")]
    PaperClosedForm,
    #[serde(rename = "simulated")]
    Simulated,
    #[serde(rename = "fitted")]
    Fitted,
}

/// A number together with where it came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tagged {
    pub value: f64,
    pub source: Provenance,
}

impl Tagged {
    pub fn closed_form(value: f64) -> Self {
        Self { value, source: Provenance::PaperClosedForm }
    }

    pub fn simulated(value: f64) -> Self {
        Self { value, source: Provenance::Simulated }
    }

    pub fn fitted(value: f64) -> Self {
        Self { value, source: Provenance::Fitted }
    }
}
