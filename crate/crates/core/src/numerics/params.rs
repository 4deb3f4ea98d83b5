//! Named parameter matrices and their co-shaped gradient accumulators.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;
use crate::numerics::tape::{NodeId, Tape};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Ordered collection of named dense parameter matrices. Matrices are held
/// behind `Arc` so forward passes can share them with tapes without copying.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    mats: Vec<Arc<Matrix>>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            mats: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, m: Matrix) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter {name}"
        );
        self.names.push(name.to_string());
        self.mats.push(Arc::new(m));
        self.index.insert(name.to_string(), self.mats.len() - 1);
        ParamId(self.mats.len() - 1)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.mats[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        Arc::make_mut(&mut self.mats[id.0])
    }

    pub fn arc(&self, id: ParamId) -> Arc<Matrix> {
        Arc::clone(&self.mats[id.0])
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.mats.len()).map(ParamId)
    }

    /// Rebuild the name index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }

    pub fn total_entries(&self) -> usize {
        self.mats.iter().map(|m| m.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.mats.iter().all(|m| m.all_finite())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-parameter gradient accumulator, co-shaped with a [`ParamStore`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradStore {
    grads: Vec<Matrix>,
}

impl GradStore {
    pub fn zeros_like(params: &ParamStore) -> Self {
        GradStore {
            grads: params
                .ids()
                .map(|id| {
                    let m = params.get(id);
                    Matrix::zeros(m.rows(), m.cols())
                })
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn zero(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &GradStore, scale: f64) -> Result<()> {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_scaled(b, scale)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.scale_in_place(s);
        }
    }

    /// Euclidean norm over every entry of every gradient.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.grads.iter_mut()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.grads.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(|m| m.all_finite())
    }
}

/// Parameters bound onto a tape as shared leaves for one forward pass.
pub struct BoundParams {
    nodes: Vec<NodeId>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &ParamStore) -> Self {
        let nodes = params.ids().map(|id| tape.shared_leaf(params.arc(id))).collect();
        BoundParams { nodes }
    }

    pub fn node(&self, id: ParamId) -> NodeId {
        self.nodes[id.0]
    }

    /// Add this tape's accumulated gradients into `out`, scaled.
    pub fn collect_grads(&self, tape: &Tape, out: &mut GradStore, scale: f64) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(g) = tape.grad(*node) {
                out.get_mut(ParamId(i)).add_scaled(g, scale)?;
            }
        }
        Ok(())
    }
}

/// One entry of a [`GradCheckReport`].
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
}

/// Result of comparing analytic gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub worst: String,
    pub pass: bool,
}

impl GradCheckReport {
    pub fn summary(&self) -> String {
        format!(
            "max rel err {:.3e} at {} -> {}",
            self.max_rel_err,
            self.worst,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Compare the analytic gradient of a scalar loss against central finite
/// differences, entry by entry.
///
/// `analytic` evaluates the loss once and returns its gradient; `loss`
/// evaluates the loss alone at perturbed parameters. Relative error is
/// `|analytic - central| / max(1, |central|)`; the report passes iff the
/// maximum over every entry stays below `threshold`.
pub fn grad_check(
    params: &ParamStore,
    analytic: impl Fn(&ParamStore) -> Result<(f64, GradStore)>,
    loss: impl Fn(&ParamStore) -> Result<f64>,
    eps: f64,
    threshold: f64,
) -> Result<GradCheckReport> {
    let (base_loss, grads) = analytic(params)?;
    if !base_loss.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }

    let mut per_param = Vec::new();
    let mut max_rel_err = 0.0f64;
    let mut worst = String::new();

    for id in params.ids() {
        let mut param_max = 0.0f64;
        let n = params.get(id).len();
        for k in 0..n {
            let mut plus = params.clone();
            plus.get_mut(id).data_mut()[k] += eps;
            let lp = loss(&plus)?;

            let mut minus = params.clone();
            minus.get_mut(id).data_mut()[k] -= eps;
            let lm = loss(&minus)?;

            if !lp.is_finite() || !lm.is_finite() {
                return Err(Error::NonFinite("grad_check perturbed loss".into()));
            }
            let central = (lp - lm) / (2.0 * eps);
            let ana = grads.get(id).data()[k];
            let rel = (ana - central).abs() / central.abs().max(1.0);
            if rel > param_max {
                param_max = rel;
            }
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = format!("{}[{}]", params.name(id), k);
            }
        }
        per_param.push(ParamCheck {
            name: params.name(id).to_string(),
            max_rel_err: param_max,
        });
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_err,
        worst,
        pass: max_rel_err < threshold,
    })
}
