use crate::error::{Result, RoaError};
use crate::moments::DomainDescriptor;
use crate::poly::{CompiledPoly, Poly};

/// A polynomial system `x' = f(t, x)` on `[0, T]` with constraint set
/// `X = {g_X > 0}`, target `X_T = {g_T > 0}` and the integration domain used
/// for the volume objective.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    n: usize,
    f: Vec<Poly>,
    g_x: Poly,
    g_t: Poly,
    horizon: f64,
    domain: DomainDescriptor,
}

impl SystemSpec {
    /// `f` lives in `(t, x)` space, `g_x` and `g_t` in `x` space.
    pub fn new(f: Vec<Poly>, g_x: Poly, g_t: Poly, horizon: f64, domain: DomainDescriptor) -> Result<Self> {
        let n = f.len();
        if n == 0 {
            return Err(RoaError::InvalidInput("the system needs at least one state".into()));
        }
        if let Some((i, fi)) = f.iter().enumerate().find(|(_, fi)| fi.nvars() != n + 1) {
            return Err(RoaError::DimensionMismatch(format!(
                "f{} has {} variables, expected t plus {n} states",
                i + 1,
                fi.nvars()
            )));
        }
        for (name, g) in [("g_X", &g_x), ("g_T", &g_t)] {
            if g.nvars() != n {
                return Err(RoaError::DimensionMismatch(format!(
                    "{name} has {} variables, expected {n}",
                    g.nvars()
                )));
            }
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(RoaError::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        domain.validate()?;
        if domain.dim() != n {
            return Err(RoaError::DimensionMismatch(format!(
                "domain has dimension {}, expected {n}",
                domain.dim()
            )));
        }
        Ok(Self {
            n,
            f,
            g_x,
            g_t,
            horizon,
            domain,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> &[Poly] {
        &self.f
    }

    pub fn g_x(&self) -> &Poly {
        &self.g_x
    }

    pub fn g_t(&self) -> &Poly {
        &self.g_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn domain(&self) -> &DomainDescriptor {
        &self.domain
    }

    /// Largest degree among the dynamics.
    pub fn f_degree(&self) -> u32 {
        self.f.iter().map(Poly::degree).max().unwrap_or(0)
    }

    /// The same system in rescaled time `s = t / T`: `dx/ds = T f(T s, x)` on
    /// `[0, 1]`. Sets and trajectories are unchanged.
    pub fn normalized(&self) -> SystemSpec {
        let t = self.horizon;
        SystemSpec {
            f: self.f.iter().map(|fi| fi.rescale_var(0, t).scale(t)).collect(),
            horizon: 1.0,
            ..self.clone()
        }
    }

    pub fn compiled(&self) -> CompiledSystem {
        CompiledSystem {
            n: self.n,
            f: self.f.iter().map(CompiledPoly::new).collect(),
            g_x: CompiledPoly::new(&self.g_x),
            g_t: CompiledPoly::new(&self.g_t),
        }
    }
}

/// Fast evaluators for the right-hand side and the set-defining polynomials.
#[derive(Clone, Debug)]
pub struct CompiledSystem {
    n: usize,
    f: Vec<CompiledPoly>,
    g_x: CompiledPoly,
    g_t: CompiledPoly,
}

impl CompiledSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Writes `f(t, x)` into `out`.
    pub fn rhs(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let mut tx = [0.0f64; 16];
        let mut heap;
        let z: &mut [f64] = if self.n < tx.len() {
            &mut tx[..self.n + 1]
        } else {
            heap = vec![0.0; self.n + 1];
            &mut heap
        };
        z[0] = t;
        z[1..].copy_from_slice(x);
        for (o, fi) in out.iter_mut().zip(&self.f) {
            *o = fi.eval(z);
        }
    }

    pub fn g_x(&self, x: &[f64]) -> f64 {
        self.g_x.eval(x)
    }

    pub fn g_t(&self, x: &[f64]) -> f64 {
        self.g_t.eval(x)
    }
}
