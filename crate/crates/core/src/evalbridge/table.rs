use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalRequest, EvalResponse, Evaluator, SurrogateEvaluator};
use crate::error::{Error, Result};

/// What a table lookup does with an unknown digest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Error,
    Surrogate,
}

#[derive(Debug, Deserialize)]
struct Row {
    digest: String,
    accuracy: f64,
}

/// Accuracy looked up by config digest from a `digest,accuracy` CSV.
pub struct TableEvaluator {
    entries: HashMap<String, f64>,
    fallback: Option<SurrogateEvaluator>,
}

impl TableEvaluator {
    pub fn new(entries: HashMap<String, f64>, fallback: Option<SurrogateEvaluator>) -> Self {
        Self { entries, fallback }
    }

    pub fn load(path: impl AsRef<Path>, fallback: Option<SurrogateEvaluator>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, fallback)
    }

    pub fn from_reader(reader: impl std::io::Read, fallback: Option<SurrogateEvaluator>) -> Result<Self> {
        let mut entries = HashMap::new();
        for (i, row) in csv::Reader::from_reader(reader).deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::parse(format!("table row {}", i + 1), e.to_string()))?;
            if !(0.0..=1.0).contains(&row.accuracy) {
                return Err(Error::parse(
                    format!("table row {}", i + 1),
                    format!("accuracy {} outside [0, 1]", row.accuracy),
                ));
            }
            entries.insert(row.digest, row.accuracy);
        }
        Ok(Self { entries, fallback })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Evaluator for TableEvaluator {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResponse> {
        if let Some(&acc) = self.entries.get(&request.config_digest) {
            return Ok(EvalResponse::ok(acc));
        }
        match &self.fallback {
            Some(s) => s.evaluate(request),
            None => Ok(EvalResponse::error(format!(
                "digest {} not in table",
                request.config_digest
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalbridge::EvalStatus;
    use crate::netzoo::{builtin_network, BuiltinNet};
    use crate::perfmodel::AcceleratorDesign;
    use crate::searchspace::CompressionConfig;

    fn request() -> EvalRequest {
        let cfg = CompressionConfig {
            model: "tinynet".into(),
            layers: vec![],
            cuts: vec![],
            design: AcceleratorDesign::with_lanes(1, 1, 1, 1, 0, (1, 1, 1), 16),
        };
        EvalRequest::new(&cfg, 10)
    }

    #[test]
    fn lookup_and_missing() {
        let req = request();
        let csv = format!("digest,accuracy\n{},0.72\n", req.config_digest);
        let t = TableEvaluator::from_reader(csv.as_bytes(), None).unwrap();
        assert_eq!(t.evaluate(&req).unwrap(), EvalResponse::ok(0.72));
        let empty = TableEvaluator::from_reader("digest,accuracy\n".as_bytes(), None).unwrap();
        assert_eq!(empty.evaluate(&req).unwrap().status, EvalStatus::Error);
    }

    #[test]
    fn surrogate_fallback() {
        let net = builtin_network(BuiltinNet::TinyNet).unwrap();
        let fb = SurrogateEvaluator::new(vec![net.clone()]);
        let t = TableEvaluator::from_reader("digest,accuracy\n".as_bytes(), Some(fb)).unwrap();
        assert_eq!(
            t.evaluate(&request()).unwrap(),
            EvalResponse::ok(net.baseline_accuracy())
        );
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(TableEvaluator::from_reader("digest,accuracy\nabc,1.7\n".as_bytes(), None).is_err());
        assert!(TableEvaluator::from_reader("digest,accuracy\nabc,x\n".as_bytes(), None).is_err());
    }
}
