//! The six hyperparameter estimation criteria and their analytic gradients.
//!
//! Every evaluation goes through `n`-dimensional surrogates of
//! `Q = ΦPΦᵀ + σ²I`:
//!
//! * `H = PΦᵀΦ + σ²I`, `H̄ = ΦᵀΦP + σ²I`, `S = P + σ²(ΦᵀΦ)⁻¹`;
//! * `ΦᵀQ⁻¹Φ = ΦᵀΦH⁻¹ = S⁻¹`, `ΦᵀQ⁻¹Y = H̄⁻¹ΦᵀY`;
//! * `log det Q = (N − n) log σ² + log det H`.
//!
//! Gradients with respect to `P` treat the `n²` entries as independent
//! variables; nothing is symmetrized, so a finite difference on a single
//! entry of a symmetric `P` matches the corresponding gradient entry.

mod derived;
pub mod dense;
mod gradient;
mod value;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use derived::{DataMoments, DerivedQuantities};
pub use gradient::{
    criterion_grad_eta, criterion_grad_p, criterion_grad_p_rewritten, grad_eta_from_grad_p,
};
pub use value::{criterion_value, surey_sureg_relation_check, CriterionEvaluator};

/// Criterion tag. Oracle criteria need the true impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CriterionKind {
    #[serde(rename = "EB", alias = "eb")]
    Eb,
    #[serde(rename = "SUREg", alias = "sureg", alias = "Sg")]
    SureG,
    #[serde(rename = "SUREy", alias = "surey", alias = "Sy")]
    SureY,
    #[serde(rename = "MSEg", alias = "mseg")]
    MseG,
    #[serde(rename = "MSEy", alias = "msey")]
    MseY,
    #[serde(rename = "EEB", alias = "eeb")]
    Eeb,
}

impl CriterionKind {
    pub const ALL: [CriterionKind; 6] = [
        CriterionKind::Eb,
        CriterionKind::SureG,
        CriterionKind::SureY,
        CriterionKind::MseG,
        CriterionKind::MseY,
        CriterionKind::Eeb,
    ];

    pub fn is_oracle(self) -> bool {
        matches!(self, CriterionKind::MseG | CriterionKind::MseY | CriterionKind::Eeb)
    }

    pub fn name(self) -> &'static str {
        match self {
            CriterionKind::Eb => "EB",
            CriterionKind::SureG => "SUREg",
            CriterionKind::SureY => "SUREy",
            CriterionKind::MseG => "MSEg",
            CriterionKind::MseY => "MSEy",
            CriterionKind::Eeb => "EEB",
        }
    }

    /// Oracle counterpart of a data-driven criterion, and vice versa.
    pub fn counterpart(self) -> CriterionKind {
        match self {
            CriterionKind::Eb => CriterionKind::Eeb,
            CriterionKind::SureG => CriterionKind::MseG,
            CriterionKind::SureY => CriterionKind::MseY,
            CriterionKind::MseG => CriterionKind::SureG,
            CriterionKind::MseY => CriterionKind::SureY,
            CriterionKind::Eeb => CriterionKind::Eb,
        }
    }
}

impl fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eb" => Ok(CriterionKind::Eb),
            "sureg" | "sg" => Ok(CriterionKind::SureG),
            "surey" | "sy" => Ok(CriterionKind::SureY),
            "mseg" => Ok(CriterionKind::MseG),
            "msey" => Ok(CriterionKind::MseY),
            "eeb" => Ok(CriterionKind::Eeb),
            _ => Err(Error::InvalidArgument(format!(
                "unknown criterion '{s}' (expected EB, SUREg, SUREy, MSEg, MSEy or EEB)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_flags() {
        let oracle: Vec<_> = CriterionKind::ALL.iter().filter(|k| k.is_oracle()).collect();
        assert_eq!(oracle, [&CriterionKind::MseG, &CriterionKind::MseY, &CriterionKind::Eeb]);
        for k in CriterionKind::ALL {
            assert_ne!(k.is_oracle(), k.counterpart().is_oracle());
            assert_eq!(k.counterpart().counterpart(), k);
        }
    }

    #[test]
    fn names_round_trip() {
        for k in CriterionKind::ALL {
            assert_eq!(k.name().parse::<CriterionKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
            assert_eq!(serde_json::from_str::<CriterionKind>(&json).unwrap(), k);
        }
        assert!("foo".parse::<CriterionKind>().is_err());
    }
}
