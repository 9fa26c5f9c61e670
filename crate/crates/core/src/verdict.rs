use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    ExtinctionAS,
    SurvivalPositive,
    SurvivalAS,
    Inconclusive,
}

impl Outcome {
    pub fn is_decisive(self) -> bool {
        self != Outcome::Inconclusive
    }

    pub fn is_survival(self) -> bool {
        matches!(self, Outcome::SurvivalPositive | Outcome::SurvivalAS)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::ExtinctionAS => "ExtinctionAS",
            Outcome::SurvivalPositive => "SurvivalPositive",
            Outcome::SurvivalAS => "SurvivalAS",
            Outcome::Inconclusive => "Inconclusive",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifier output with enough diagnostics to audit the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    #[serde(with = "ext_real")]
    pub criterion_value: f64,
    #[serde(with = "ext_real")]
    pub threshold: f64,
    /// Half-width of the undecided zone around `threshold`.
    pub margin: f64,
    pub theorem_tag: String,
    pub horizon_used: u64,
    pub margin_note: String,
}

impl Verdict {
    pub fn new(
        outcome: Outcome,
        criterion_value: f64,
        threshold: f64,
        tag: &str,
        horizon: u64,
    ) -> Self {
        Verdict {
            outcome,
            criterion_value,
            threshold,
            margin: 0.0,
            theorem_tag: tag.to_string(),
            horizon_used: horizon,
            margin_note: String::new(),
        }
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn note(mut self, msg: impl AsRef<str>) -> Self {
        if !self.margin_note.is_empty() {
            self.margin_note.push_str("; ");
        }
        self.margin_note.push_str(msg.as_ref());
        self
    }
}

/// Serde for reals that may be infinite: numbers, or the strings "inf"/"-inf".
pub mod ext_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else if x.is_nan() {
            s.serialize_str("nan")
        } else if *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }

    pub fn format(x: f64) -> String {
        if x.is_finite() {
            format!("{x}")
        } else if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_values_round_trip() {
        let v = Verdict::new(
            Outcome::SurvivalAS,
            f64::INFINITY,
            0.0,
            "line-reverse-w",
            10,
        )
        .note("a")
        .note("b");
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"inf\""));
        let back: Verdict = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.margin_note, "a; b");
    }
}
