use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::extraction::{extract_blocks, extract_uniform};
use super::KoopmanError;
use crate::dictionary::{Dictionary, ExtensionTransform, SbfSet};
use crate::dynsys::{check_integration_args, integrate_field, InputSignal, Trajectory};
use crate::matlib::Mat;
use crate::scalar::Real;

/// Residuals recorded while identifying a model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentDiagnostics {
    pub edmd_residual: f64,
    pub gram_condition: f64,
    pub log_residual: f64,
    pub gamma_residual: f64,
    pub basis_max_residual: f64,
    pub lifting: Vec<String>,
}

/// `ẋ = A₀x + Σ_j Γ_j F_j(R_j x) + Bu + c`.
#[derive(Clone, Debug)]
pub struct PersidskiiModel<T> {
    pub n: usize,
    pub m: usize,
    /// `Γ_j`, each `n × k_j`.
    pub gammas: Vec<Mat<T>>,
    pub b: Mat<T>,
    pub sbfs: SbfSet<T>,
    pub ext: ExtensionTransform<T>,
    pub a0: Option<Mat<T>>,
    /// Constant drift `c = Σ_j Γ_j ℓ_j` produced by translation offsets.
    pub offset: Option<Vec<T>>,
    pub diagnostics: Option<IdentDiagnostics>,
}

impl<T: Real> PersidskiiModel<T> {
    pub fn new(gammas: Vec<Mat<T>>, b: Mat<T>, sbfs: SbfSet<T>) -> Result<Self, KoopmanError> {
        let n = b.rows();
        let model = PersidskiiModel {
            n,
            m: b.cols(),
            gammas,
            b,
            sbfs,
            ext: ExtensionTransform::default(),
            a0: None,
            offset: None,
            diagnostics: None,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model with variable changes and/or translations, for blocks whose
    /// sizes differ from `n`.
    pub fn extended(
        gammas: Vec<Mat<T>>,
        b: Mat<T>,
        sbfs: SbfSet<T>,
        ext: ExtensionTransform<T>,
    ) -> Result<Self, KoopmanError> {
        let mut model = PersidskiiModel {
            n: b.rows(),
            m: b.cols(),
            gammas,
            b,
            sbfs,
            ext,
            a0: None,
            offset: None,
            diagnostics: None,
        };
        model.offset = model.offset_from_translation();
        model.validate()?;
        Ok(model)
    }

    pub fn with_a0(mut self, a0: Mat<T>) -> Result<Self, KoopmanError> {
        self.a0 = Some(a0);
        self.validate()?;
        Ok(self)
    }

    pub fn with_extension(mut self, ext: ExtensionTransform<T>) -> Result<Self, KoopmanError> {
        self.ext = ext;
        self.offset = self.offset_from_translation();
        self.validate()?;
        Ok(self)
    }

    /// Extracts `Γ_j` and `B` from `Γ` for the dictionary's block layout.
    pub fn from_gamma(gamma: &[T], dict: &Dictionary<T>) -> Result<Self, KoopmanError> {
        let (n, m) = (dict.state_dim(), dict.input_dim());
        let sizes = dict.sbfs().block_sizes();
        let (gammas, b) = if dict.extension().r.is_none() && sizes.iter().all(|&k| k == n) {
            extract_uniform(gamma, n, m, sizes.len())?
        } else {
            extract_blocks(gamma, n, m, &sizes)?
        };
        let mut model = PersidskiiModel {
            n,
            m,
            gammas,
            b,
            sbfs: dict.sbfs().clone(),
            ext: dict.extension().clone(),
            a0: None,
            offset: None,
            diagnostics: None,
        };
        model.offset = model.offset_from_translation();
        model.validate()?;
        Ok(model)
    }

    fn offset_from_translation(&self) -> Option<Vec<T>> {
        let offs = self.ext.offsets.as_ref()?;
        let mut c = vec![T::zero(); self.n];
        for (g, l) in self.gammas.iter().zip(offs) {
            for (ci, v) in c.iter_mut().zip(g.mul_vec(l)) {
                *ci += v;
            }
        }
        Some(c)
    }

    pub fn validate(&self) -> Result<(), KoopmanError> {
        let sizes = self.sbfs.block_sizes();
        if self.gammas.len() != sizes.len() {
            return Err(KoopmanError::Model(format!(
                "{} coefficient matrices for {} nonlinearity blocks",
                self.gammas.len(),
                sizes.len()
            )));
        }
        for (j, (g, &k)) in self.gammas.iter().zip(&sizes).enumerate() {
            if g.shape() != (self.n, k) {
                return Err(KoopmanError::Model(format!(
                    "Γ_{} is {}x{}, expected {}x{k}",
                    j + 1,
                    g.rows(),
                    g.cols(),
                    self.n
                )));
            }
        }
        if self.b.shape() != (self.n, self.m) {
            return Err(KoopmanError::Model("B has the wrong shape".into()));
        }
        if let Some(a0) = &self.a0 {
            if a0.shape() != (self.n, self.n) {
                return Err(KoopmanError::Model("A0 must be n x n".into()));
            }
        }
        if let Some(c) = &self.offset {
            if c.len() != self.n {
                return Err(KoopmanError::Model("offset must have length n".into()));
            }
        }
        self.ext
            .validate(&self.sbfs, self.n)
            .map_err(|e| KoopmanError::Model(e.to_string()))
    }

    pub fn block_count(&self) -> usize {
        self.gammas.len()
    }

    /// True when the model has the plain form `ẋ = Σ Γ_j f_j(x) + Bu`.
    pub fn is_plain(&self) -> bool {
        self.a0.is_none() && self.ext.r.is_none()
    }

    /// `F_j(R_j x)`, the sector part of block `j` (without offsets).
    pub fn block_value(&self, j: usize, x: &[T]) -> Vec<T> {
        self.sbfs.eval_block(j, &self.ext.block_argument(j, x))
    }

    pub fn vector_field(&self, x: &[T], u: &[T]) -> Vec<T> {
        let mut dx = match &self.a0 {
            Some(a0) => a0.mul_vec(x),
            None => vec![T::zero(); self.n],
        };
        for j in 0..self.gammas.len() {
            for (d, v) in dx.iter_mut().zip(self.gammas[j].mul_vec(&self.block_value(j, x))) {
                *d += v;
            }
        }
        for (d, v) in dx.iter_mut().zip(self.b.mul_vec(u)) {
            *d += v;
        }
        if let Some(c) = &self.offset {
            for (d, v) in dx.iter_mut().zip(c) {
                *d += *v;
            }
        }
        dx
    }

    /// The offset as an extra input column: returns `[B, c]`, to be driven by
    /// `[u; 1]`. Returns `B` unchanged without an offset.
    pub fn augmented_input_matrix(&self) -> Mat<T> {
        match &self.offset {
            None => self.b.clone(),
            Some(c) => {
                let mut aug = Mat::zeros(self.n, self.m + 1);
                aug.set_block(0, 0, &self.b);
                aug.set_block(0, self.m, &Mat::column_vector(c));
                aug
            }
        }
    }

    pub fn to_file(&self) -> ModelFile {
        let rows = |a: &Mat<T>| -> Vec<Vec<f64>> {
            a.to_rows()
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.as_f64()).collect())
                .collect()
        };
        let vecf = |v: &[T]| -> Vec<f64> { v.iter().map(|x| x.as_f64()).collect() };
        ModelFile {
            kind: "persidskii-model".into(),
            version: 1,
            n: self.n,
            m: self.m,
            blocks: self.gammas.len(),
            sbf_names: self.sbfs.names(),
            phi: self.sbfs.phi(),
            mu: self.sbfs.mu(),
            gammas: self.gammas.iter().map(rows).collect(),
            b: rows(&self.b),
            a0: self.a0.as_ref().map(rows),
            r: self.ext.r.as_ref().map(|rs| rs.iter().map(rows).collect()),
            basis_offsets: self.ext.offsets.as_ref().map(|o| o.iter().map(|v| vecf(v)).collect()),
            offset: self.offset.as_deref().map(vecf),
            diagnostics: self.diagnostics.clone(),
        }
    }

    pub fn from_file(file: &ModelFile) -> Result<Self, KoopmanError> {
        let mat = |rows: &Vec<Vec<f64>>, r: usize, c: usize| -> Result<Mat<T>, KoopmanError> {
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(KoopmanError::Model(format!("expected a {r}x{c} matrix")));
            }
            let conv: Vec<Vec<T>> = rows.iter().map(|row| row.iter().map(|&v| T::lit(v)).collect()).collect();
            Ok(Mat::from_rows(&conv).or_else(|_| {
                if r == 0 || c == 0 {
                    Ok(Mat::zeros(r, c))
                } else {
                    Err(KoopmanError::Model("non-finite matrix entry".into()))
                }
            })?)
        };
        let sbfs = SbfSet::from_names(&file.sbf_names)?;
        if sbfs.names() != file.sbf_names {
            return Err(KoopmanError::Model("nonlinearity blocks are not in growth order".into()));
        }
        let sizes = sbfs.block_sizes();
        if sizes.len() != file.blocks || file.gammas.len() != file.blocks {
            return Err(KoopmanError::Model("block count mismatch".into()));
        }
        let gammas = file
            .gammas
            .iter()
            .zip(&sizes)
            .map(|(g, &k)| mat(g, file.n, k))
            .collect::<Result<Vec<_>, _>>()?;
        let b = mat(&file.b, file.n, file.m)?;
        let ext = ExtensionTransform {
            offsets: file
                .basis_offsets
                .as_ref()
                .map(|o| o.iter().map(|v| v.iter().map(|&x| T::lit(x)).collect()).collect()),
            r: match &file.r {
                Some(rs) => Some(
                    rs.iter()
                        .zip(&sizes)
                        .map(|(r, &k)| mat(r, k, file.n))
                        .collect::<Result<Vec<_>, _>>()?,
                ),
                None => None,
            },
        };
        let model = PersidskiiModel {
            n: file.n,
            m: file.m,
            gammas,
            b,
            sbfs,
            ext,
            a0: file.a0.as_ref().map(|a| mat(a, file.n, file.n)).transpose()?,
            offset: file.offset.as_ref().map(|c| c.iter().map(|&v| T::lit(v)).collect()),
            diagnostics: file.diagnostics.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        self.to_file().to_json()
    }

    pub fn from_json(text: &str) -> Result<Self, KoopmanError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| KoopmanError::Model(format!("malformed model file: {e}")))?;
        Self::from_file(&file)
    }

    /// SHA-256 of the model's coefficients and structure (diagnostics excluded).
    pub fn digest(&self) -> String {
        let mut file = self.to_file();
        file.diagnostics = None;
        let hash = Sha256::digest(file.to_json().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Serialized form of a [`PersidskiiModel`]; matrices are lists of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kind: String,
    pub version: u32,
    pub n: usize,
    pub m: usize,
    pub blocks: usize,
    pub sbf_names: Vec<Vec<String>>,
    pub phi: usize,
    pub mu: usize,
    pub gammas: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    pub a0: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<Vec<f64>>>>,
    pub basis_offsets: Option<Vec<Vec<f64>>>,
    pub offset: Option<Vec<f64>>,
    pub diagnostics: Option<IdentDiagnostics>,
}

impl ModelFile {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serialization cannot fail");
        s.push('\n');
        s
    }
}

/// RK4 simulation of the identified model.
pub fn predict<T: Real>(
    model: &PersidskiiModel<T>,
    x0: &[T],
    u: &InputSignal<T>,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>, KoopmanError> {
    check_integration_args(model.n, model.m, x0, u, t_end, dt)?;
    Ok(integrate_field(|_, x, uu| model.vector_field(x, uu), x0, u, t_end, dt)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity1() -> SbfSet<f64> {
        SbfSet::uniform(&["identity"], 1).unwrap()
    }

    #[test]
    fn zero_model_is_constant() {
        let m = PersidskiiModel::new(vec![Mat::zeros(1, 1)], Mat::zeros(1, 1), identity1()).unwrap();
        let tr = predict(&m, &[0.7], &InputSignal::zero(1), 1.0, 0.1).unwrap();
        assert!(tr.states.as_slice().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn pure_integrator() {
        let sbfs = SbfSet::<f64>::uniform(&["identity"], 2).unwrap();
        let m = PersidskiiModel::new(vec![Mat::zeros(2, 2)], Mat::identity(2), sbfs).unwrap();
        let tr = predict(&m, &[1.0, -1.0], &InputSignal::Constant(vec![1.0, 1.0]), 2.0, 0.1).unwrap();
        let last = tr.last_state();
        assert!((last[0] - 3.0).abs() < 1e-12 && (last[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_digest() {
        let sbfs = SbfSet::<f64>::uniform(&["identity", "tanh"], 2).unwrap();
        let m = PersidskiiModel::new(
            vec![
                Mat::from_row_slices(&[&[-1.0, 0.25], &[0.0, -2.0]]),
                Mat::from_row_slices(&[&[0.1, 0.0], &[0.3, -0.7]]),
            ],
            Mat::from_row_slices(&[&[1.0], &[0.5]]),
            sbfs,
        )
        .unwrap();
        let text = m.to_json();
        let back = PersidskiiModel::<f64>::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.digest(), m.digest());
        assert_eq!(m.digest().len(), 64);
    }

    #[test]
    fn offsets_become_constant_drift() {
        let sbfs = identity1();
        let m = PersidskiiModel::new(vec![Mat::from_row_slices(&[&[-2.0]])], Mat::zeros(1, 0), sbfs)
            .unwrap()
            .with_extension(ExtensionTransform {
                offsets: Some(vec![vec![0.5]]),
                r: None,
            })
            .unwrap();
        assert_eq!(m.offset, Some(vec![-1.0]));
        assert_eq!(m.vector_field(&[0.0], &[]), vec![-1.0]);
        assert_eq!(m.augmented_input_matrix().shape(), (1, 1));
    }

    #[test]
    fn shape_errors() {
        assert!(PersidskiiModel::new(vec![Mat::zeros(2, 2)], Mat::zeros(1, 1), identity1()).is_err());
        assert!(PersidskiiModel::new(vec![], Mat::zeros(1, 1), identity1()).is_err());
    }
}
