use crate::error::{Error, Result};

/// Gaussian radial basis on one axis with uniformly spaced centers. The
/// width is set so that each basis function takes exactly the value `p` at
/// its neighbors' centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    spacing: f64,
    /// `ln(1/p)`; `phi(x) = exp(-ln(1/p) * ((x - c) / spacing)^2)`.
    log_inv_overlap: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, basis: usize, overlap: f64) -> Self {
        let spacing = if basis > 1 { (hi - lo) / (basis - 1) as f64 } else { hi - lo };
        let centers = (0..basis).map(|b| lo + spacing * b as f64).collect();
        Self {
            lo,
            hi,
            centers,
            spacing,
            log_inv_overlap: -overlap.ln(),
        }
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Standard deviation of every Gaussian on this axis.
    pub fn sigma(&self) -> f64 {
        self.spacing / (2.0 * self.log_inv_overlap).sqrt()
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let x = x.clamp(self.lo, self.hi);
        for (o, c) in out.iter_mut().zip(&self.centers) {
            let z = (x - c) / self.spacing;
            *o = (-self.log_inv_overlap * z * z).exp();
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.centers.len()];
        self.eval_into(x, &mut out);
        out
    }
}

/// Tensor grid of Gaussian bases over the (BG, insulin) plane.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    basis: usize,
    overlap: f64,
    bg: Axis,
    ins: Axis,
}

impl FeatureGrid {
    pub fn new(basis: usize, overlap: f64, bg_range: (f64, f64), ins_range: (f64, f64)) -> Result<Self> {
        if basis == 0 {
            return Err(Error::InvalidInput("basis count must be at least 1".into()));
        }
        if !(overlap > 0.0 && overlap < 1.0) {
            return Err(Error::InvalidInput(format!("overlap must lie in (0, 1), got {overlap}")));
        }
        for (name, (lo, hi)) in [("BG", bg_range), ("insulin", ins_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInput(format!("{name} range [{lo}, {hi}] is empty")));
            }
        }
        Ok(Self {
            basis,
            overlap,
            bg: Axis::new(bg_range.0, bg_range.1, basis, overlap),
            ins: Axis::new(ins_range.0, ins_range.1, basis, overlap),
        })
    }

    pub fn basis(&self) -> usize {
        self.basis
    }

    pub fn overlap(&self) -> f64 {
        self.overlap
    }

    pub fn bg_axis(&self) -> &Axis {
        &self.bg
    }

    pub fn ins_axis(&self) -> &Axis {
        &self.ins
    }

    pub fn bg_range(&self) -> (f64, f64) {
        self.bg.range()
    }

    pub fn ins_range(&self) -> (f64, f64) {
        self.ins.range()
    }

    pub fn len(&self) -> usize {
        self.basis * self.basis
    }

    pub fn is_empty(&self) -> bool {
        self.basis == 0
    }

    /// Row-major `B x B` products `phi_b(bg) * phi_b'(ins)`.
    pub fn features(&self, bg: f64, ins: f64) -> Vec<f64> {
        let phi_bg = self.bg.eval(bg);
        let phi_ins = self.ins.eval(ins);
        let mut out = Vec::with_capacity(self.len());
        for a in &phi_bg {
            out.extend(phi_ins.iter().map(|b| a * b));
        }
        out
    }

    /// Sum of all features near the middle of the grid. Dividing a target
    /// Q level by this gives a flat coefficient initialization.
    pub(crate) fn feature_mass(&self) -> f64 {
        let mid = |axis: &Axis| axis.eval(axis.centers[axis.centers.len() / 2]).iter().sum::<f64>();
        mid(&self.bg) * mid(&self.ins)
    }
}

impl Default for FeatureGrid {
    fn default() -> Self {
        Self::new(8, 0.2, (40.0, 600.0), (0.0, 30.0)).expect("valid default grid")
    }
}
