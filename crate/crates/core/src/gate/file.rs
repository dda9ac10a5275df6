//! Gate files: JSON with `d_in`, `d_hidden`, `family_order`, row-major
//! `W1`/`b1`/`W2`/`b2` as `f32`, the decision `threshold` and the training
//! configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GateParams, TrainConfig, N_FAMILIES};
use crate::io::write_json;
use crate::vocab::LanguageFamily;
use crate::{Error, Result};

const FIELDS: [&str; 8] = ["d_in", "d_hidden", "family_order", "W1", "b1", "W2", "b2", "threshold"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateFile {
    pub d_in: usize,
    pub d_hidden: usize,
    pub family_order: Vec<LanguageFamily>,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f32>>,
    pub b1: Vec<f32>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f32>>,
    pub b2: Vec<f32>,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

impl GateFile {
    pub fn from_params(params: &GateParams, threshold: f64, train_config: Option<&TrainConfig>) -> Self {
        let rows = |v: &[f64], width: usize| v.chunks(width).map(|r| r.iter().map(|&x| x as f32).collect()).collect();
        Self {
            d_in: params.d_in,
            d_hidden: params.d_hidden,
            family_order: LanguageFamily::ALL.to_vec(),
            w1: rows(&params.w1, params.d_in),
            b1: params.b1.iter().map(|&x| x as f32).collect(),
            w2: rows(&params.w2, params.d_hidden),
            b2: params.b2.iter().map(|&x| x as f32).collect(),
            threshold,
            train_config: train_config.cloned(),
        }
    }

    /// Parameters in canonical family order, after shape checks.
    pub fn params(&self) -> Result<GateParams> {
        let mut order = self.family_order.clone();
        order.sort();
        order.dedup();
        if self.family_order.len() != N_FAMILIES || order.len() != N_FAMILIES {
            return Err(Error::config("family_order must list each of the four families once"));
        }
        let rows_of = |what, m: &[Vec<f32>], n_rows: usize, width: usize| -> Result<Vec<f64>> {
            if m.len() != n_rows {
                return Err(Error::Dimension { what, expected: n_rows, got: m.len() });
            }
            if let Some(r) = m.iter().find(|r| r.len() != width) {
                return Err(Error::Dimension { what, expected: width, got: r.len() });
            }
            Ok(m.iter().flatten().map(|&x| x as f64).collect())
        };
        let w1 = rows_of("W1 rows", &self.w1, self.d_hidden, self.d_in)?;
        let w2_file = rows_of("W2 rows", &self.w2, N_FAMILIES, self.d_hidden)?;
        let mut p = GateParams::zeros(self.d_in, self.d_hidden);
        p.w1 = w1;
        p.b1 = self.b1.iter().map(|&x| x as f64).collect();
        p.b2 = vec![0.0; N_FAMILIES];
        if self.b2.len() != N_FAMILIES {
            return Err(Error::Dimension { what: "b2 size", expected: N_FAMILIES, got: self.b2.len() });
        }
        for (row, &f) in self.family_order.iter().enumerate() {
            let i = f.index();
            p.w2[i * self.d_hidden..(i + 1) * self.d_hidden]
                .copy_from_slice(&w2_file[row * self.d_hidden..(row + 1) * self.d_hidden]);
            p.b2[i] = self.b2[row] as f64;
        }
        p.validate()?;
        Ok(p)
    }
}

pub fn save_gate(path: &Path, params: &GateParams, threshold: f64, train_config: Option<&TrainConfig>) -> Result<()> {
    write_json(path, &GateFile::from_params(params, threshold, train_config))
}

pub fn read_gate_file(path: &Path) -> Result<GateFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        // a cut-off file fails at EOF; name the first field that never appeared
        let missing = e
            .is_eof()
            .then(|| FIELDS.iter().find(|f| !text.contains(&format!("\"{f}\""))))
            .flatten();
        match missing {
            Some(f) => Error::parse(path, e.line(), format!("file ends before field `{f}`")),
            None => Error::parse(path, e.line(), e),
        }
    })
}

pub fn load_gate(path: &Path) -> Result<GateParams> {
    read_gate_file(path)?.params()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gate() -> GateParams {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = GateParams::init(6, 9, &mut rng);
        for b in g.b1.iter_mut().chain(g.b2.iter_mut()) {
            *b = rng.random_range(-1.0..1.0);
        }
        g
    }

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gate.json");
        let g = gate();
        save_gate(&path, &g, 0.5, Some(&TrainConfig::default())).unwrap();
        let back = load_gate(&path).unwrap();
        assert_eq!(back, g.quantized());
        let q = g.quantized();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let h: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(back.forward(&h).unwrap(), q.forward(&h).unwrap());
        }
        let file = read_gate_file(&path).unwrap();
        assert_eq!(file.train_config, Some(TrainConfig::default()));
    }

    #[test]
    fn truncated_file_names_missing_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gate.json");
        save_gate(&path, &gate(), 0.5, None).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.find("\"W2\"").unwrap();
        std::fs::write(&path, &text[..cut]).unwrap();
        let err = load_gate(&path).unwrap_err().to_string();
        assert!(err.contains("`W2`"), "{err}");

        // well-formed JSON without a field
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("b1");
        std::fs::write(&path, v.to_string()).unwrap();
        let err = load_gate(&path).unwrap_err().to_string();
        assert!(err.contains("b1"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut f = GateFile::from_params(&gate(), 0.5, None);
        f.w1[3].pop();
        assert!(matches!(f.params(), Err(Error::Dimension { what: "W1 rows", expected: 6, got: 5 })));
        let mut f = GateFile::from_params(&gate(), 0.5, None);
        f.d_hidden = 10;
        assert!(f.params().is_err());
        let mut f = GateFile::from_params(&gate(), 0.5, None);
        f.family_order[1] = LanguageFamily::Cj;
        assert!(f.params().is_err());
    }

    #[test]
    fn permuted_family_order_is_canonicalized() {
        let g = gate().quantized();
        let mut f = GateFile::from_params(&g, 0.5, None);
        f.family_order.reverse();
        f.w2.reverse();
        f.b2.reverse();
        assert_eq!(f.params().unwrap(), g);
    }

    #[test]
    fn d_in_mismatch_at_use() {
        let g = gate();
        assert!(matches!(g.check_input(64), Err(Error::Dimension { expected: 6, got: 64, .. })));
    }
}
