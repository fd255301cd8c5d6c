//! Geodesic Hamiltonian flow of H = g^{ij}p_ip_j and drift of the quadratic
//! first integrals along it.

use std::io::Write;

use thiserror::Error;

use crate::expr::EvalError;
use crate::killing::{killing_tensors, TensorField};
use crate::stackel::{Chart, Geometry, SpecError};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("initial point {0:?} is not inside the domain")]
    Start(Vec<f64>),
    #[error("the trajectory leaves the domain in its first step")]
    ImmediateExit,
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error("step size must be positive and finite, got {0}")]
    Step(f64),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Sampled solution of Hamilton's equations; `k[s][α]` is K_(α) at step s
/// (K_(1) = H).
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub k: Vec<Vec<f64>>,
    /// Time at which integration stopped because the next step left the domain.
    pub exited_at: Option<f64>,
}

fn quadratic(k: &nalgebra::DMatrix<f64>, p: &[f64]) -> f64 {
    let n = p.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += k[(i, j)] * p[i] * p[j];
        }
    }
    s
}

/// (ẋ, ṗ) = (2g⁻¹p, −∂_i g^{jk}p_jp_k).
fn vector_field(ginv: &TensorField, x: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let jet = ginv.jet(x)?;
    let n = x.len();
    let dx = (0..n).map(|i| 2.0 * (0..n).map(|j| jet.value[(i, j)] * p[j]).sum::<f64>()).collect();
    let dp = (0..n).map(|i| -quadratic(&jet.d[i], p)).collect();
    Ok((dx, dp))
}

fn axpy(y: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    y.iter().zip(d).map(|(u, v)| u + a * v).collect()
}

/// Classical RK4 for the geodesic flow with inverse metric `ginv`, monitoring the
/// quadratic integrals of `monitors` at every step.
pub fn integrate_with(
    chart: &Chart,
    ginv: &TensorField,
    monitors: &[TensorField],
    x0: &[f64],
    p0: &[f64],
    t_end: f64,
    dt: f64,
) -> Result<Trajectory, DynamicsError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DynamicsError::Step(dt));
    }
    if !chart.contains(x0) {
        return Err(DynamicsError::Start(x0.to_vec()));
    }
    let values = |x: &[f64], p: &[f64]| -> Result<(f64, Vec<f64>), EvalError> {
        let h = quadratic(&ginv.jet(x)?.value, p);
        let k = monitors.iter().map(|m| Ok(quadratic(&m.jet(x)?.value, p))).collect::<Result<_, EvalError>>()?;
        Ok((h, k))
    };
    let steps = (t_end / dt).round() as usize;
    let (h0, k0) = values(x0, p0)?;
    let mut traj = Trajectory {
        t: vec![0.0],
        x: vec![x0.to_vec()],
        p: vec![p0.to_vec()],
        h: vec![h0],
        k: vec![k0],
        exited_at: None,
    };
    let (mut x, mut p) = (x0.to_vec(), p0.to_vec());
    for s in 1..=steps {
        let t = (s - 1) as f64 * dt;
        let stage = |x: &[f64], p: &[f64]| -> Result<Option<(Vec<f64>, Vec<f64>)>, EvalError> {
            if !chart.contains(x) {
                return Ok(None);
            }
            vector_field(ginv, x, p).map(Some)
        };
        let next = (|| {
            let Some((k1x, k1p)) = stage(&x, &p)? else { return Ok(None) };
            let Some((k2x, k2p)) = stage(&axpy(&x, dt / 2.0, &k1x), &axpy(&p, dt / 2.0, &k1p))? else { return Ok(None) };
            let Some((k3x, k3p)) = stage(&axpy(&x, dt / 2.0, &k2x), &axpy(&p, dt / 2.0, &k2p))? else { return Ok(None) };
            let Some((k4x, k4p)) = stage(&axpy(&x, dt, &k3x), &axpy(&p, dt, &k3p))? else { return Ok(None) };
            let comb = |y: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| -> Vec<f64> {
                (0..y.len()).map(|i| y[i] + dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i])).collect()
            };
            Ok::<_, EvalError>(Some((comb(&x, &k1x, &k2x, &k3x, &k4x), comb(&p, &k1p, &k2p, &k3p, &k4p))))
        })()?;
        let Some((nx, np)) = next.filter(|(nx, _)| chart.contains(nx)) else {
            if s == 1 {
                return Err(DynamicsError::ImmediateExit);
            }
            traj.exited_at = Some(t);
            break;
        };
        if nx.iter().chain(&np).any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite(t + dt));
        }
        let (h, k) = values(&nx, &np)?;
        traj.t.push(s as f64 * dt);
        traj.x.push(nx.clone());
        traj.p.push(np.clone());
        traj.h.push(h);
        traj.k.push(k);
        x = nx;
        p = np;
    }
    Ok(traj)
}

/// RK4 geodesic flow of a spec, monitoring all K_(α).
pub fn geodesic_integrate(geom: &Geometry, x0: &[f64], p0: &[f64], t_end: f64, dt: f64) -> Result<Trajectory, DynamicsError> {
    let set = killing_tensors(geom)?;
    integrate_with(geom.chart(), set.get(0), &set.tensors, x0, p0, t_end, dt)
}

fn drift(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let Some(&v0) = v.first() else { return 0.0 };
    v.iter().map(|x| (x - v0).abs()).fold(0.0, f64::max) / (1.0 + v0.abs())
}

/// max_t |K_(α)(t) − K_(α)(0)| / (1 + |K_(α)(0)|) for monitored integral α.
pub fn first_integral_drift(traj: &Trajectory, alpha: usize) -> f64 {
    drift(traj.k.iter().map(|k| k[alpha]))
}

pub fn hamiltonian_drift(traj: &Trajectory) -> f64 {
    drift(traj.h.iter().copied())
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Columns t, x…, p…, H, K_2…K_r.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(out);
        let n = self.x.first().map_or(0, Vec::len);
        let r = self.k.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.push("H".into());
        header.extend((2..=r).map(|a| format!("K{a}")));
        wr.write_record(&header)?;
        for s in 0..self.len() {
            let mut row = vec![self.t[s].to_string()];
            row.extend(self.x[s].iter().chain(&self.p[s]).map(f64::to_string));
            row.push(self.h[s].to_string());
            row.extend(self.k[s].iter().skip(1).map(f64::to_string));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}
