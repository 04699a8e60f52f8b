//! Parameterization of a multivariate Hawkes process with exponential
//! kernels `h_{j,k}(t) = exp(-alpha_{j,k} t)` and exact intensity evaluation.
//!
//! Intensities are predictable: an event at exactly `t` does not contribute
//! to `lambda(t)`, only to `lambda(t+)`.

use nalgebra::{DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Baselines `mu`, self-excitement matrix `A` and per-pair decays `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    mu: DVector<f64>,
    adjacency: DMatrix<f64>,
    decays: DMatrix<f64>,
}

impl ModelParams {
    pub fn new(mu: DVector<f64>, adjacency: DMatrix<f64>, decays: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidParams("dimension must be positive".into()));
        }
        if adjacency.shape() != (d, d) || decays.shape() != (d, d) {
            return Err(Error::Dimension(format!(
                "mu has {} entries but A is {:?} and alpha is {:?}",
                d,
                adjacency.shape(),
                decays.shape()
            )));
        }
        if mu.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParams("baselines must be finite and >= 0".into()));
        }
        if adjacency.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidParams("adjacency entries must be finite and >= 0".into()));
        }
        if decays.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::InvalidParams("decays must be finite and > 0".into()));
        }
        Ok(Self { mu, adjacency, decays })
    }

    /// Parameters sharing one decay rate across all pairs.
    pub fn with_uniform_decay(mu: DVector<f64>, adjacency: DMatrix<f64>, alpha: f64) -> Result<Self> {
        let d = mu.len();
        Self::new(mu, adjacency, DMatrix::from_element(d, d, alpha))
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn decays(&self) -> &DMatrix<f64> {
        &self.decays
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        (self.mu, self.adjacency, self.decays)
    }

    /// Integrated kernel masses `K_{j,k} = a_{j,k} / alpha_{j,k}`.
    pub fn branching_matrix(&self) -> DMatrix<f64> {
        self.adjacency.component_div(&self.decays)
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.branching_matrix())
    }

    /// Stationary mean intensity `m = (I - K)^{-1} mu`.
    pub fn mean_stationary_intensity(&self) -> Result<DVector<f64>> {
        let k = self.branching_matrix();
        let rho = spectral_radius(&k);
        if rho >= 1.0 {
            return Err(Error::NonStationary(rho));
        }
        let d = self.dim();
        let system = DMatrix::identity(d, d) - k;
        system
            .lu()
            .solve(&self.mu)
            .ok_or_else(|| Error::Numerical("singular I - K".into()))
    }

    /// Intensity of `node` at time `t`, counting only events strictly before `t`.
    pub fn intensity_at(&self, data: &EventData, node: usize, t: f64) -> Result<f64> {
        self.check_data(data)?;
        let d = self.dim();
        if node >= d {
            return Err(Error::IndexOutOfRange { index: node, d });
        }
        if !(0.0..=data.horizon()).contains(&t) {
            return Err(Error::TimeOutOfWindow { t, horizon: data.horizon() });
        }
        let mut value = self.mu[node];
        for (k, times) in data.events().iter().enumerate() {
            let a = self.adjacency[(node, k)];
            if a == 0.0 {
                continue;
            }
            value += a * decayed_sum(times, self.decays[(node, k)], t);
        }
        Ok(value)
    }

    /// Intensity of `node` sampled at increasing `sample_times`.
    pub fn intensity_trace(
        &self,
        data: &EventData,
        node: usize,
        sample_times: &[f64],
    ) -> Result<IntensityTrace> {
        if sample_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidEvents("sample times must be nondecreasing".into()));
        }
        let values = sample_times
            .iter()
            .map(|&t| self.intensity_at(data, node, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(IntensityTrace { node, sample_times: sample_times.to_vec(), values })
    }

    pub(crate) fn check_data(&self, data: &EventData) -> Result<()> {
        if data.dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "parameters have d = {} but data has d = {}",
                self.dim(),
                data.dim()
            )));
        }
        Ok(())
    }
}

/// `sum_{s in times, s < t} exp(-alpha (t - s))` via the left-to-right recursion.
pub(crate) fn decayed_sum(times: &[f64], alpha: f64, t: f64) -> f64 {
    let mut g = 0.0;
    let mut last = 0.0;
    for &s in times {
        if s >= t {
            break;
        }
        g = g * (-alpha * (s - last)).exp() + 1.0;
        last = s;
    }
    g * (-alpha * (t - last)).exp()
}

/// Largest modulus among the eigenvalues of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    match m.clone().try_schur(f64::EPSILON, MAX_ITER) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        // Upper bounds on the radius, so stationarity checks stay conservative.
        None => {
            let rows = m.row_iter().map(|r| r.abs().sum()).fold(0.0, f64::max);
            let cols = m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
            rows.min(cols).min(operator_norm(m))
        }
    }
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    robust_svd(m, false).map(|svd| svd.singular_values.max()).unwrap_or(f64::NAN)
}

/// Iteration cap for iterative decompositions; nalgebra's defaults never give up.
const MAX_ITER: usize = 10_000;

/// Rescales `m` to unit max-abs and flushes entries below `1e-18` of that
/// (far under the SVD's own backward error). Entries spanning hundreds of
/// orders of magnitude otherwise underflow or stall the SVD. Returns the
/// conditioned matrix and the scale to multiply singular values by.
fn conditioned(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let scale = m.amax();
    if scale == 0.0 || !scale.is_finite() {
        return (m.clone(), 1.0);
    }
    (m.map(|v| if v.abs() < 1e-18 * scale { 0.0 } else { v / scale }), scale)
}

/// SVD with bounded iterations, singular values in the original scale.
/// Falls back to the transpose, then to the eigendecomposition of `m^T m`
/// (singular vectors of zero singular values are then left as zeros).
pub(crate) fn robust_svd(m: &DMatrix<f64>, vectors: bool) -> Result<SVD<f64, Dyn, Dyn>> {
    let (scaled, scale) = conditioned(m);
    let rescale = |mut svd: SVD<f64, Dyn, Dyn>| {
        svd.singular_values *= scale;
        svd
    };
    if let Some(svd) = scaled.clone().try_svd(vectors, vectors, f64::EPSILON, MAX_ITER) {
        return Ok(rescale(svd));
    }
    if let Some(svd) = scaled.transpose().try_svd(vectors, vectors, f64::EPSILON, MAX_ITER) {
        let swapped = SVD {
            u: svd.v_t.map(|vt| vt.transpose()),
            v_t: svd.u.map(|u| u.transpose()),
            singular_values: svd.singular_values,
        };
        return Ok(rescale(swapped));
    }
    let gram = scaled.tr_mul(&scaled);
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, MAX_ITER)
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))?;
    let sv = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = eig.eigenvectors;
    let cutoff = f64::EPSILON * sv.max();
    let u = DMatrix::from_fn(scaled.nrows(), sv.len(), |_, _| 0.0);
    let u = sv.iter().enumerate().fold(u, |mut u, (i, &s)| {
        if s > cutoff {
            u.set_column(i, &(&scaled * v.column(i) / s));
        }
        u
    });
    let svd = SVD { u: vectors.then_some(u), v_t: vectors.then(|| v.transpose()), singular_values: sv };
    Ok(rescale(svd))
}

/// Event timestamps per node on the window `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventData {
    horizon: f64,
    events: Vec<Vec<f64>>,
}

impl EventData {
    pub fn new(horizon: f64, events: Vec<Vec<f64>>) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidEvents(format!("horizon must be positive, got {horizon}")));
        }
        if events.is_empty() {
            return Err(Error::InvalidEvents("at least one node is required".into()));
        }
        for (node, times) in events.iter().enumerate() {
            if let Some(bad) = times.iter().find(|t| !(t.is_finite() && **t > 0.0 && **t <= horizon)) {
                return Err(Error::InvalidEvents(format!(
                    "node {node}: timestamp {bad} outside (0, {horizon}]"
                )));
            }
            if times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidEvents(format!(
                    "node {node}: timestamps must be strictly increasing"
                )));
            }
        }
        Ok(Self { horizon, events })
    }

    /// Data with no events at all.
    pub fn empty(d: usize, horizon: f64) -> Result<Self> {
        Self::new(horizon, vec![Vec::new(); d])
    }

    pub fn dim(&self) -> usize {
        self.events.len()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[Vec<f64>] {
        &self.events
    }

    pub fn node_events(&self, node: usize) -> &[f64] {
        &self.events[node]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.events.iter().map(Vec::len).collect()
    }

    pub fn total_events(&self) -> usize {
        self.events.iter().map(Vec::len).sum()
    }

    /// All events as `(time, node)` sorted by time, ties broken by node.
    pub fn merged(&self) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = self
            .events
            .iter()
            .enumerate()
            .flat_map(|(k, ts)| ts.iter().map(move |&t| (t, k)))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all
    }

    /// Events in `[0, horizon]` only.
    pub fn truncate(&self, horizon: f64) -> Result<Self> {
        let events = self
            .events
            .iter()
            .map(|ts| ts.iter().copied().take_while(|&t| t <= horizon).collect())
            .collect();
        Self::new(horizon, events)
    }

    /// Events in `(start, end]` shifted by `-start`, observed on `[0, end - start]`.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::InvalidEvents(format!("empty window ({start}, {end}]")));
        }
        let events = self
            .events
            .iter()
            .map(|ts| {
                ts.iter()
                    .copied()
                    .filter(|&t| t > start && t <= end)
                    .map(|t| t - start)
                    .filter(|&t| t > 0.0)
                    .collect()
            })
            .collect();
        Self::new(end - start, events)
    }
}

/// Intensity of one node sampled on a grid of times.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityTrace {
    pub node: usize,
    pub sample_times: Vec<f64>,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(mu: f64, a: f64, alpha: f64) -> ModelParams {
        ModelParams::new(
            DVector::from_element(1, mu),
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, alpha),
        )
        .unwrap()
    }

    #[test]
    fn constant_intensity_without_excitation() {
        let p = scalar(0.3, 0.0, 1.0);
        let data = EventData::new(10.0, vec![vec![1.0, 2.0, 4.0]]).unwrap();
        assert_eq!(p.intensity_at(&data, 0, 5.0).unwrap(), 0.3);
    }

    #[test]
    fn intensity_two_event_sum() {
        let p = scalar(0.0, 1.0, 1.0);
        let data = EventData::new(3.0, vec![vec![1.0, 2.0]]).unwrap();
        let expected = (-2.0f64).exp() + (-1.0f64).exp();
        assert_relative_eq!(p.intensity_at(&data, 0, 3.0).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.50321, epsilon = 1e-5);
    }

    #[test]
    fn intensity_excludes_event_at_t() {
        let p = scalar(0.0, 1.0, 1.0);
        let data = EventData::new(3.0, vec![vec![1.0, 2.0]]).unwrap();
        let v = p.intensity_at(&data, 0, 2.0).unwrap();
        assert_relative_eq!(v, (-1.0f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(v, 0.36788, epsilon = 1e-5);
    }

    #[test]
    fn intensity_errors() {
        let p = scalar(0.1, 0.0, 1.0);
        let data = EventData::new(3.0, vec![vec![1.0]]).unwrap();
        assert!(matches!(p.intensity_at(&data, 1, 1.0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(p.intensity_at(&data, 0, 3.5), Err(Error::TimeOutOfWindow { .. })));
        assert!(matches!(p.intensity_at(&data, 0, -0.1), Err(Error::TimeOutOfWindow { .. })));
    }

    #[test]
    fn branching_and_radius() {
        let p = ModelParams::with_uniform_decay(DVector::zeros(2), DMatrix::zeros(2, 2), 1.0).unwrap();
        assert_eq!(p.branching_matrix(), DMatrix::zeros(2, 2));
        assert_eq!(p.spectral_radius(), 0.0);

        let p = scalar(0.1, 0.5, 1.0);
        assert_eq!(p.branching_matrix()[(0, 0)], 0.5);
        assert_relative_eq!(p.spectral_radius(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn stationary_mean() {
        let p = ModelParams::with_uniform_decay(DVector::from_vec(vec![0.2, 0.7]), DMatrix::zeros(2, 2), 1.0)
            .unwrap();
        assert_eq!(p.mean_stationary_intensity().unwrap(), *p.mu());

        let p = scalar(0.5, 0.5, 1.0);
        assert_relative_eq!(p.mean_stationary_intensity().unwrap()[0], 1.0, epsilon = 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        let p = ModelParams::with_uniform_decay(DVector::from_element(2, 0.1), a, 1.0).unwrap();
        let m = p.mean_stationary_intensity().unwrap();
        assert_relative_eq!(m[0], 0.2, epsilon = 1e-12);
        assert_relative_eq!(m[1], 0.2, epsilon = 1e-12);

        let p = scalar(0.5, 1.5, 1.0);
        assert!(matches!(p.mean_stationary_intensity(), Err(Error::NonStationary(_))));
    }

    #[test]
    fn params_validation() {
        let bad = ModelParams::new(
            DVector::from_element(1, -0.1),
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
        );
        assert!(bad.is_err());
        let bad = ModelParams::new(DVector::zeros(2), DMatrix::zeros(1, 1), DMatrix::from_element(2, 2, 1.0));
        assert!(matches!(bad, Err(Error::Dimension(_))));
        let bad = ModelParams::new(DVector::zeros(1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        assert!(bad.is_err());
    }

    #[test]
    fn event_validation() {
        assert!(EventData::new(2.0, vec![vec![1.0, 1.0]]).is_err());
        assert!(EventData::new(2.0, vec![vec![2.5]]).is_err());
        assert!(EventData::new(2.0, vec![vec![0.0]]).is_err());
        assert!(EventData::new(0.0, vec![vec![]]).is_err());
        assert!(EventData::new(2.0, vec![vec![2.0]]).is_ok());
    }

    #[test]
    fn window_rebases() {
        let data = EventData::new(4.0, vec![vec![1.0, 2.5, 3.0], vec![2.0]]).unwrap();
        let w = data.window(2.0, 4.0).unwrap();
        assert_eq!(w.horizon(), 2.0);
        assert_eq!(w.events(), &[vec![0.5, 1.0], vec![]]);
        let t = data.truncate(2.0).unwrap();
        assert_eq!(t.events(), &[vec![1.0], vec![2.0]]);
    }
}
