use serde::{Deserialize, Serialize};

use crate::tensor::C64;

/// How far a reported norm value can be trusted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NormKind {
    /// Closed form or degenerate input.
    Exact,
    /// SDP value with duality gap `gap`.
    Certified { gap: f64 },
    /// Best of `restarts` nonconvex ascents; a lower bound.
    HeuristicLower { restarts: usize },
    /// Assembled from several heuristic terms by a triangle-inequality bound.
    ComposedUpper,
}

impl NormKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::Exact => "exact",
            NormKind::Certified { .. } => "certified",
            NormKind::HeuristicLower { .. } => "heuristic-lower",
            NormKind::ComposedUpper => "composed-upper",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub value: f64,
    #[serde(flatten)]
    pub kind: NormKind,
    /// Input achieving `value`, when the evaluation has one.
    #[serde(skip_serializing_if = "Option::is_none", default, with = "witness_serde")]
    pub witness: Option<Vec<C64>>,
    /// A certified upper bound for the same quantity, when one was computed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub upper: Option<f64>,
}

impl NormReport {
    pub fn exact(value: f64) -> Self {
        NormReport {
            value,
            kind: NormKind::Exact,
            witness: None,
            upper: None,
        }
    }

    pub fn certified(value: f64, gap: f64, witness: Option<Vec<C64>>) -> Self {
        NormReport {
            value,
            kind: NormKind::Certified { gap },
            witness,
            upper: Some(value + gap),
        }
    }

    pub fn heuristic(value: f64, restarts: usize, witness: Vec<C64>) -> Self {
        NormReport {
            value,
            kind: NormKind::HeuristicLower { restarts },
            witness: Some(witness),
            upper: None,
        }
    }

    pub fn with_upper(mut self, upper: f64) -> Self {
        self.upper = Some(upper);
        self
    }
}

mod witness_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::tensor::C64;

    pub fn serialize<S: Serializer>(w: &Option<Vec<C64>>, s: S) -> Result<S::Ok, S::Error> {
        match w {
            Some(v) => s.collect_seq(v.iter().map(|z| [z.re, z.im])),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<C64>>, D::Error> {
        let raw: Option<Vec<[f64; 2]>> = Option::deserialize(d)?;
        Ok(raw.map(|v| v.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let r = NormReport::certified(1.5, 2e-9, Some(vec![C64::new(0.5, -0.25)]));
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"kind\":\"certified\""));
        assert!(s.contains("\"gap\":2e-9"));
        let back: NormReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        let h = NormReport::heuristic(0.25, 64, vec![]);
        let s = serde_json::to_string(&h).unwrap();
        assert!(s.contains("\"restarts\":64"));
        assert_eq!(serde_json::from_str::<NormReport>(&s).unwrap(), h);
    }
}
