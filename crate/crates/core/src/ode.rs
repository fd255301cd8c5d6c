//! Adaptive Dormand–Prince 5(4) integration onto a fixed output grid.

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Dp54 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dp54 {
    fn default() -> Self {
        Dp54 {
            rtol: 1e-10,
            atol: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum OdeError<E> {
    Rhs(E),
    StepSizeUnderflow(f64),
    TooManySteps,
}

impl Dp54 {
    /// Solution values at every grid node (`grid[0]` is the initial point).
    pub fn solve<E>(
        &self,
        mut f: impl FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
        grid: &[f64],
        y0: &[f64],
    ) -> Result<Vec<Vec<f64>>, OdeError<E>> {
        let dim = y0.len();
        let mut out = vec![y0.to_vec()];
        let mut y = y0.to_vec();
        let mut t = grid[0];
        let mut h = (grid.get(1).copied().unwrap_or(t) - t) * 0.5;
        let mut steps = 0;
        for &target in &grid[1..] {
            while (target - t).abs() > 1e-14 * (1.0 + target.abs()) {
                steps += 1;
                if steps > self.max_steps {
                    return Err(OdeError::TooManySteps);
                }
                let step = if (t + h - target) * h.signum() > 0.0 { target - t } else { h };
                let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
                k.push(f(t, &y).map_err(OdeError::Rhs)?);
                for s in 1..7 {
                    let ys: Vec<f64> = (0..dim).map(|d| y[d] + step * (0..s).map(|j| A[s][j] * k[j][d]).sum::<f64>()).collect();
                    k.push(f(t + C[s] * step, &ys).map_err(OdeError::Rhs)?);
                }
                let y5: Vec<f64> = (0..dim).map(|d| y[d] + step * (0..7).map(|j| B5[j] * k[j][d]).sum::<f64>()).collect();
                let err = ((0..dim)
                    .map(|d| {
                        let e = step * (0..7).map(|j| (B5[j] - B4[j]) * k[j][d]).sum::<f64>();
                        let sc = self.atol + self.rtol * y[d].abs().max(y5[d].abs());
                        (e / sc).powi(2)
                    })
                    .sum::<f64>()
                    / dim as f64)
                    .sqrt();
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    t += step;
                    y = y5;
                    // a step shortened to land on the grid says little about the next size
                    if step == h {
                        h = step * factor;
                    }
                } else {
                    h = step * factor;
                    if h.abs() < 1e-14 * (1.0 + t.abs()) {
                        return Err(OdeError::StepSizeUnderflow(t));
                    }
                }
            }
            t = target;
            out.push(y.clone());
        }
        Ok(out)
    }
}
