//! Binds a dataset, a reduced model, observer gains and a prebuilt
//! fundamental matrix into a least-squares objective over the search
//! coordinates.
//!
//! The fundamental matrix and its factorizations are shared immutable state;
//! evaluation is pure in the candidate vector, so candidates can be scored
//! concurrently.

use crate::canonical::{AdmissibleBox, CanonicalSystem, SearchSpace};
use crate::error::Result;
use crate::observer::{self, FundamentalMatrix, ObserverGains, Representation};
use crate::ode::Method;
use crate::quadrature::{Backend, Rule};
use crate::signal::SampledSignal;
use std::sync::Arc;

/// Penalty scale for candidates outside the admissible box or hitting a
/// model singularity.
pub const PENALTY: f64 = 1e16;

#[derive(Clone)]
pub struct EstimationProblem {
    pub system: Arc<dyn CanonicalSystem>,
    pub search: Arc<dyn SearchSpace>,
    pub gains: ObserverGains,
    pub signal: Arc<SampledSignal>,
    pub phi: Arc<FundamentalMatrix>,
    pub rule: Rule,
    pub backend: Backend,
    /// Evaluate residuals at every `subsample_stride`-th grid point.
    pub subsample_stride: usize,
    /// Admissible box in search coordinates.
    pub admissible: AdmissibleBox,
}

impl EstimationProblem {
    /// Builds the fundamental matrix for the dataset and assembles the
    /// problem around it.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        system: Arc<dyn CanonicalSystem>,
        search: Arc<dyn SearchSpace>,
        gains: ObserverGains,
        signal: Arc<SampledSignal>,
        method: Method,
        h: f64,
        rule: Rule,
        backend: Backend,
        subsample_stride: usize,
        admissible: AdmissibleBox,
    ) -> Result<Self> {
        let phi = Arc::new(observer::compute_fundamental_matrix(
            system.as_ref(),
            &gains,
            &signal,
            method,
            h,
        )?);
        Ok(Self {
            system,
            search,
            gains,
            signal,
            phi,
            rule,
            backend,
            subsample_stride,
            admissible,
        })
    }

    /// Maps search coordinates to the model's physical nonlinear parameters.
    pub fn physical(&self, search_coords: &[f64]) -> Vec<f64> {
        self.search.to_physical(search_coords)
    }

    /// Full representation (periodic fixed point and predicted output) for a
    /// candidate, propagating numeric and domain errors.
    pub fn representation(&self, search_coords: &[f64]) -> Result<Representation> {
        self.representation_with_backend(search_coords, self.backend)
    }

    pub fn representation_with_backend(
        &self,
        search_coords: &[f64],
        backend: Backend,
    ) -> Result<Representation> {
        let lambda = self.physical(search_coords);
        observer::representation(
            self.system.as_ref(),
            &self.gains,
            &self.phi,
            &self.signal,
            &lambda,
            self.rule,
            backend,
        )
    }

    /// Sum of squared residuals at the strided grid points.
    pub fn objective_checked(&self, search_coords: &[f64]) -> Result<f64> {
        self.objective_checked_with_backend(search_coords, self.backend)
    }

    pub fn objective_checked_with_backend(
        &self,
        search_coords: &[f64],
        backend: Backend,
    ) -> Result<f64> {
        let rep = self.representation_with_backend(search_coords, backend)?;
        Ok(self.residual_sum(&rep.yhat))
    }

    pub fn residual_sum(&self, yhat: &[f64]) -> f64 {
        let stride = self.subsample_stride.max(1);
        let y = self.signal.values();
        let mut acc = 0.0;
        let mut j = 0;
        while j < y.len() {
            let e = yhat[j] - y[j];
            acc += e * e;
            j += stride;
        }
        acc
    }

    /// Total objective with box-violation and failure penalties: candidates
    /// outside the box score `PENALTY * (1 + distance)`; model singularities
    /// and numeric failures score `PENALTY`.
    pub fn objective(&self, search_coords: &[f64]) -> f64 {
        self.objective_with_backend(search_coords, self.backend)
    }

    pub fn objective_with_backend(&self, search_coords: &[f64], backend: Backend) -> f64 {
        if !self.admissible.contains(search_coords) {
            return PENALTY * (1.0 + self.admissible.distance_outside(search_coords));
        }
        match self.objective_checked_with_backend(search_coords, backend) {
            Ok(v) if v.is_finite() => v,
            _ => PENALTY,
        }
    }

    /// Recovered initial state and linear block at a candidate.
    pub fn recover(&self, search_coords: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let lambda = self.physical(search_coords);
        let r = observer::compute_r(
            self.system.as_ref(),
            &self.gains,
            &self.phi,
            &self.signal,
            &lambda,
            self.rule,
            self.backend,
        )?;
        Ok(observer::recover_x0_theta(
            r.as_slice(),
            self.system.dims().n,
        ))
    }
}
