use std::sync::Arc;

use nalgebra::DMatrix;

use super::assemble::{coefficients, BoundaryCondition, OperatorSet, N_PARTS};
use super::instrument::{AffineCms, Instrument, ReferenceRates};
use super::mesh::Mesh;
use super::sparse::{BandedLu, CsrMatrix};
use crate::market_data::ParameterGroup;
use crate::{Error, Result};

const DATE_EPS: f64 = 1e-9;

/// Instrument values at every mesh node at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub t: f64,
    pub values: Vec<f64>,
}

/// Ascending time points 0 = t_0 < … < t_N = T containing every key date.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub times: Vec<f64>,
    /// `events[n]` marks a key date at `times[n]` (never set at t = 0).
    pub events: Vec<bool>,
}

impl TimeGrid {
    /// Splits each interval between consecutive key dates into equal steps no
    /// longer than `dt`.
    pub fn build(key_dates: &[f64], maturity: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Validation(format!("time step must be positive, got {dt}")));
        }
        let mut anchors: Vec<f64> = key_dates
            .iter()
            .copied()
            .filter(|&d| d > DATE_EPS && d < maturity - DATE_EPS)
            .collect();
        anchors.sort_by(|a, b| a.total_cmp(b));
        anchors.push(maturity);
        let mut times = vec![0.0];
        let mut events = vec![false];
        let mut prev = 0.0;
        for &a in &anchors {
            let gap = a - prev;
            let steps = (gap / dt - 1e-9).ceil().max(1.0) as usize;
            for k in 1..steps {
                times.push(prev + gap * k as f64 / steps as f64);
                events.push(false);
            }
            times.push(a);
            events.push(true);
            prev = a;
        }
        Ok(Self { times, events })
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn maturity(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.times.iter().any(|&s| (s - t).abs() < DATE_EPS)
    }
}

/// Finite-element discretization of one instrument on one mesh and time grid.
/// Immutable once built; solves for different scenarios may run in parallel.
#[derive(Clone)]
pub struct FullModel {
    pub mesh: Mesh,
    pub operators: OperatorSet,
    pub time_grid: TimeGrid,
    pub instrument: Instrument,
    pub reference_rates: Arc<dyn ReferenceRates>,
}

impl std::fmt::Debug for FullModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FullModel")
            .field("m", &self.mesh.m())
            .field("steps", &self.time_grid.steps())
            .field("boundary", &self.operators.boundary)
            .finish()
    }
}

/// Full-model trajectory: column n holds the surface at `times[n]` after any
/// event at that date has been applied.
#[derive(Debug, Clone)]
pub struct FullSolution {
    pub times: Vec<f64>,
    pub values: DMatrix<f64>,
    /// Surfaces at key dates before the coupon and put updates, by time index.
    pub pre_event: Vec<(usize, Vec<f64>)>,
    pub value_at_spot: f64,
}

impl FullSolution {
    pub fn surfaces(&self) -> Vec<ValueSurface> {
        self.times
            .iter()
            .enumerate()
            .map(|(n, &t)| ValueSurface {
                t,
                values: self.values.column(n).iter().copied().collect(),
            })
            .collect()
    }

    pub fn initial(&self) -> Vec<f64> {
        self.values.column(0).iter().copied().collect()
    }
}

impl FullModel {
    pub fn new(mesh: Mesh, instrument: Instrument, dt: f64, boundary: BoundaryCondition) -> Result<Self> {
        instrument.validate()?;
        let time_grid = TimeGrid::build(&instrument.key_dates(), instrument.maturity, dt)?;
        Self::with_time_grid(mesh, instrument, time_grid, boundary)
    }

    pub fn with_time_grid(
        mesh: Mesh,
        instrument: Instrument,
        time_grid: TimeGrid,
        boundary: BoundaryCondition,
    ) -> Result<Self> {
        for d in instrument.key_dates() {
            if !time_grid.contains(d) {
                return Err(Error::Schedule(format!("key date {d} missing from the time grid")));
            }
        }
        if (time_grid.maturity() - instrument.maturity).abs() > DATE_EPS {
            return Err(Error::Schedule("time grid does not end at maturity".into()));
        }
        let operators = OperatorSet::assemble(&mesh, boundary);
        Ok(Self {
            mesh,
            operators,
            time_grid,
            instrument,
            reference_rates: Arc::new(AffineCms),
        })
    }

    pub fn with_reference_rates(mut self, rates: Arc<dyn ReferenceRates>) -> Self {
        self.reference_rates = rates;
        self
    }

    pub fn m(&self) -> usize {
        self.mesh.m()
    }

    /// Coefficients and length of the step from `times[n]` back to `times[n-1]`.
    /// θ is evaluated at the step midpoint.
    pub fn step_coefficients(&self, rho: &ParameterGroup, n: usize) -> ([f64; N_PARTS], f64) {
        let t = &self.time_grid.times;
        let dt = t[n] - t[n - 1];
        (coefficients(rho, 0.5 * (t[n] + t[n - 1])), dt)
    }

    /// System matrices (A, B) of a step of length `dt` ending at time `t`.
    pub fn assemble(&self, rho: &ParameterGroup, t: f64, dt: f64) -> (CsrMatrix, CsrMatrix) {
        self.operators.system(&coefficients(rho, t), dt)
    }

    /// V(T) = nominal + terminal cash flow, then any put at T.
    pub fn terminal(&self, rho: &ParameterGroup) -> Vec<f64> {
        let mut v = vec![self.instrument.nominal; self.m()];
        self.apply_events(rho, self.instrument.maturity, &mut v);
        v
    }

    /// Coupon first, then the put comparison.
    pub fn apply_events(&self, rho: &ParameterGroup, t: f64, v: &mut [f64]) {
        if let Some(flow) = self.instrument.cashflow(rho, t, &self.mesh.nodes, self.reference_rates.as_ref()) {
            for (x, c) in v.iter_mut().zip(flow) {
                *x += c;
            }
        }
        if let Some(k) = self.instrument.put_strike_at(t) {
            for x in v.iter_mut() {
                *x = x.max(k);
            }
        }
    }

    pub fn spot_value(&self, values: &[f64], rho: &ParameterGroup) -> f64 {
        self.mesh.interpolate(values, rho.spot, 0.0)
    }

    pub fn solve(&self, rho: &ParameterGroup) -> Result<FullSolution> {
        self.solve_from(rho, self.terminal(rho))
    }

    /// Backward sweep from an arbitrary surface at maturity.
    pub fn solve_from(&self, rho: &ParameterGroup, terminal: Vec<f64>) -> Result<FullSolution> {
        if terminal.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: terminal.len(),
            });
        }
        let grid = &self.time_grid;
        let n_steps = grid.steps();
        let m = self.m();
        let mut values = DMatrix::zeros(m, n_steps + 1);
        let mut v = terminal;
        values.column_mut(n_steps).copy_from_slice(&v);
        let mut rhs = vec![0.0; m];
        let mut pre_event = Vec::new();
        let mut cached: Option<(([f64; N_PARTS], f64), BandedLu)> = None;
        for n in (1..=n_steps).rev() {
            let key = self.step_coefficients(rho, n);
            let fresh = !matches!(&cached, Some((k, _)) if *k == key);
            if fresh {
                let (a, _) = self.operators.system(&key.0, key.1);
                let lu = BandedLu::factor(&a).map_err(|p| Error::LinearSolve {
                    scenario: rho.scenario_id,
                    t: grid.times[n - 1],
                    message: format!("zero pivot in column {}", p.0),
                })?;
                cached = Some((key, lu));
            }
            let lu = &cached.as_ref().unwrap().1;
            self.operators.mass.mul_vec_into(&v, &mut rhs);
            lu.solve_in_place(&mut rhs);
            std::mem::swap(&mut v, &mut rhs);
            if grid.events[n - 1] {
                pre_event.push((n - 1, v.clone()));
                self.apply_events(rho, grid.times[n - 1], &mut v);
            }
            if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::LinearSolve {
                    scenario: rho.scenario_id,
                    t: grid.times[n - 1],
                    message: format!("non-finite value at node {bad}"),
                });
            }
            values.column_mut(n - 1).copy_from_slice(&v);
        }
        let value_at_spot = self.spot_value(&v, rho);
        pre_event.reverse();
        Ok(FullSolution {
            times: grid.times.clone(),
            values,
            pre_event,
            value_at_spot,
        })
    }
}
