//! Plate material data and benchmark problem definitions.
//!
//! Each benchmark bundles a domain, transverse load, essential boundary
//! data, and (where available) closed-form fields used for error norms. All
//! quantities follow inch/psi units throughout.

use std::sync::Arc;

use nalgebra::{Matrix2, Matrix3};

use crate::error::{Error, Result};
use crate::Vec2;

/// Isotropic plate material with derived bending and shear scales.
#[derive(Debug, Clone)]
pub struct PlateMaterial {
    pub e_y: f64,
    pub nu: f64,
    pub kappa: f64,
    pub t: f64,
    /// Scaled shear modulus kappa * E / (2 (1 + nu)).
    pub lambda_s: f64,
    /// Bending scale E / (12 (1 - nu^2)).
    pub d: f64,
    /// Bending moduli in Voigt form.
    pub c: Matrix3<f64>,
}

impl PlateMaterial {
    /// Shear stiffness coefficient lambda * t^-2 that multiplies every
    /// shear-energy block.
    pub fn lambda_t(&self) -> f64 {
        self.lambda_s / (self.t * self.t)
    }
}

pub fn make_material(e_y: f64, nu: f64, kappa: f64, t: f64) -> Result<PlateMaterial> {
    if !(e_y > 0.0) {
        return Err(Error::InvalidArgument("Young's modulus must be positive".into()));
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "Poisson's ratio {nu} outside (0, 0.5)"
        )));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument("shear correction factor must be positive".into()));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("thickness must be positive".into()));
    }
    let d = e_y / (12.0 * (1.0 - nu * nu));
    let lambda_s = kappa * e_y / (2.0 * (1.0 + nu));
    let c = d * Matrix3::new(
        1.0, nu, 0.0, //
        nu, 1.0, 0.0, //
        0.0, 0.0, (1.0 - nu) / 2.0,
    );
    Ok(PlateMaterial {
        e_y,
        nu,
        kappa,
        t,
        lambda_s,
        d,
        c,
    })
}

/// Benchmark constants shared by every plate test.
pub const E_YOUNG: f64 = 10.92e6;
pub const NU_POISSON: f64 = 0.3;
pub const KAPPA: f64 = 5.0 / 6.0;

pub fn benchmark_material(t: f64) -> PlateMaterial {
    make_material(E_YOUNG, NU_POISSON, KAPPA, t).expect("benchmark constants are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Patch,
    Circle,
    Square,
    Parallelogram,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Patch => "patch",
            ProblemKind::Circle => "circle",
            ProblemKind::Square => "square",
            ProblemKind::Parallelogram => "parallelogram",
        }
    }
}

/// Domain the benchmark runs on; consumed by the mesh-generation driver.
#[derive(Debug, Clone, Copy)]
pub enum DomainSpec {
    UnitSquare,
    UnitDisk,
    Parallelogram { a: f64, b: f64, skew_deg: f64 },
}

type ScalarField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
type VectorField = Arc<dyn Fn(Vec2) -> Vec2 + Send + Sync>;
type MatrixField = Arc<dyn Fn(Vec2) -> Matrix2<f64> + Send + Sync>;

/// Closed-form fields of a benchmark, bound to a specific material.
#[derive(Clone)]
pub struct ExactSolution {
    pub w: ScalarField,
    pub r: VectorField,
    pub grad_w: VectorField,
    /// Row i holds the gradient of rotation component i.
    pub grad_r: MatrixField,
    /// Scaled transverse shear stress lambda t^-2 (grad w - r).
    pub s: VectorField,
}

#[derive(Clone)]
pub struct BenchmarkProblem {
    pub kind: ProblemKind,
    pub domain: DomainSpec,
    pub load: ScalarField,
    pub exact: Option<ExactSolution>,
    /// Tabulated center deflection when no closed form exists.
    pub reference_center_deflection: Option<f64>,
}

impl BenchmarkProblem {
    /// Prescribed (w, r) on the boundary: the exact trace where known,
    /// homogeneous clamping otherwise.
    pub fn essential_data(&self, x: Vec2) -> (f64, Vec2) {
        match &self.exact {
            Some(exact) if self.kind == ProblemKind::Patch => ((exact.w)(x), (exact.r)(x)),
            _ => (0.0, Vec2::zeros()),
        }
    }
}

/// Zero-shear patch test: linear deflection, constant rotations, no load.
pub fn patch_problem() -> BenchmarkProblem {
    let exact = ExactSolution {
        w: Arc::new(|p: Vec2| 1.0 + p.x + p.y),
        r: Arc::new(|_| Vec2::new(1.0, 1.0)),
        grad_w: Arc::new(|_| Vec2::new(1.0, 1.0)),
        grad_r: Arc::new(|_| Matrix2::zeros()),
        s: Arc::new(|_| Vec2::zeros()),
    };
    BenchmarkProblem {
        kind: ProblemKind::Patch,
        domain: DomainSpec::UnitSquare,
        load: Arc::new(|_| 0.0),
        exact: Some(exact),
        reference_center_deflection: None,
    }
}

/// Clamped unit-radius circular plate under uniform unit load.
pub fn circle_problem(material: &PlateMaterial) -> BenchmarkProblem {
    let d = material.d;
    let ti = material.t * material.t / material.lambda_s; // t^2 / lambda
    let w = move |p: Vec2| {
        let r2 = p.norm_squared();
        r2 * r2 / (64.0 * d) - r2 * (ti / 4.0 + 1.0 / (32.0 * d)) + ti / 4.0 + 1.0 / (64.0 * d)
    };
    let r = move |p: Vec2| {
        let r2 = p.norm_squared();
        Vec2::new(p.x * (r2 - 1.0), p.y * (r2 - 1.0)) / (16.0 * d)
    };
    let grad_w = move |p: Vec2| {
        let r2 = p.norm_squared();
        let factor = (r2 - 1.0) / (16.0 * d) - ti / 2.0;
        p * factor
    };
    let grad_r = move |p: Vec2| {
        let r2 = p.norm_squared();
        Matrix2::new(
            (2.0 * p.x * p.x + r2 - 1.0) / (16.0 * d),
            p.x * p.y / (8.0 * d),
            p.x * p.y / (8.0 * d),
            (2.0 * p.y * p.y + r2 - 1.0) / (16.0 * d),
        )
    };
    let s = move |p: Vec2| -p / 2.0;
    BenchmarkProblem {
        kind: ProblemKind::Circle,
        domain: DomainSpec::UnitDisk,
        load: Arc::new(|_| 1.0),
        exact: Some(ExactSolution {
            w: Arc::new(w),
            r: Arc::new(r),
            grad_w: Arc::new(grad_w),
            grad_r: Arc::new(grad_r),
            s: Arc::new(s),
        }),
        reference_center_deflection: None,
    }
}

// polynomial building blocks of the square-plate solution
fn g(u: f64) -> f64 {
    u.powi(3) * (u - 1.0).powi(3)
}
fn dg(u: f64) -> f64 {
    3.0 * u * u * (u - 1.0) * (u - 1.0) * (2.0 * u - 1.0)
}
fn ddg(u: f64) -> f64 {
    6.0 * u * (u - 1.0) * (5.0 * u * u - 5.0 * u + 1.0)
}
fn p5(u: f64) -> f64 {
    5.0 * u * u - 5.0 * u + 1.0
}
/// d/du [u (u-1) p5(u)]
fn dq5(u: f64) -> f64 {
    (2.0 * u - 1.0) * (10.0 * u * u - 10.0 * u + 1.0)
}

/// Clamped unit square under the polynomial load whose solution is known in
/// closed form.
pub fn square_problem(material: &PlateMaterial) -> BenchmarkProblem {
    let nu = material.nu;
    let d = material.d;
    let t2 = material.t * material.t;
    let lambda_s = material.lambda_s;
    let cw = 2.0 / (5.0 * (1.0 - nu));

    let load = move |p: Vec2| {
        let (x, y) = (p.x, p.y);
        d * (12.0 * y * (y - 1.0) * p5(x)
            * (2.0 * y * y * (y - 1.0) * (y - 1.0) + x * (x - 1.0) * p5(y))
            + 12.0 * x * (x - 1.0) * p5(y)
                * (2.0 * x * x * (x - 1.0) * (x - 1.0) + y * (y - 1.0) * p5(x)))
    };
    // w = g(x) g(y) / 3 + t^2 * w1, rotations are the gradient of the first
    // term, so the shear stress reduces to lambda * grad w1 independent of t.
    let w1 = move |x: f64, y: f64| -cw * (g(y) * x * (x - 1.0) * p5(x) + g(x) * y * (y - 1.0) * p5(y));
    let grad_w1 = move |x: f64, y: f64| {
        Vec2::new(
            -cw * (g(y) * dq5(x) + dg(x) * y * (y - 1.0) * p5(y)),
            -cw * (dg(y) * x * (x - 1.0) * p5(x) + g(x) * dq5(y)),
        )
    };
    let w = move |p: Vec2| g(p.x) * g(p.y) / 3.0 + t2 * w1(p.x, p.y);
    let r = move |p: Vec2| Vec2::new(dg(p.x) * g(p.y) / 3.0, g(p.x) * dg(p.y) / 3.0);
    let grad_w = move |p: Vec2| {
        Vec2::new(dg(p.x) * g(p.y) / 3.0, g(p.x) * dg(p.y) / 3.0) + t2 * grad_w1(p.x, p.y)
    };
    let grad_r = move |p: Vec2| {
        Matrix2::new(
            ddg(p.x) * g(p.y) / 3.0,
            dg(p.x) * dg(p.y) / 3.0,
            dg(p.x) * dg(p.y) / 3.0,
            g(p.x) * ddg(p.y) / 3.0,
        )
    };
    let s = move |p: Vec2| lambda_s * grad_w1(p.x, p.y);
    BenchmarkProblem {
        kind: ProblemKind::Square,
        domain: DomainSpec::UnitSquare,
        load: Arc::new(load),
        exact: Some(ExactSolution {
            w: Arc::new(w),
            r: Arc::new(r),
            grad_w: Arc::new(grad_w),
            grad_r: Arc::new(grad_r),
            s: Arc::new(s),
        }),
        reference_center_deflection: None,
    }
}

/// Reference center deflection for the clamped 45-degree parallelogram.
pub const PARALLELOGRAM_REFERENCE_DEFLECTION: f64 = 6.52;

/// Clamped parallelogram plate (200 x 100, unit thickness) under a uniform
/// 100 psi load; assessed against a tabulated center deflection.
pub fn parallelogram_problem(skew_deg: f64) -> BenchmarkProblem {
    BenchmarkProblem {
        kind: ProblemKind::Parallelogram,
        domain: DomainSpec::Parallelogram {
            a: 200.0,
            b: 100.0,
            skew_deg,
        },
        load: Arc::new(|_| 100.0),
        exact: None,
        reference_center_deflection: Some(PARALLELOGRAM_REFERENCE_DEFLECTION),
    }
}
