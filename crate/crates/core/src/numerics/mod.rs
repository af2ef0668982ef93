//! Numerical kernels shared by the solvers.

mod eigen;
mod lambert;
mod lp;
mod subgradient;

pub use eigen::{hermitian_defect, hermitian_eig_desc, low_rank_eig_desc, thin_qr, HermitianEigen};
pub use lambert::lambert_w0;
pub use lp::{solve_lp, LpProblem, LpSolution};
pub use subgradient::{project_orthant_hyperplane, Sense, SubgradientState};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimization of a unimodal `f` on `[a, b]`; returns the
/// minimizer and its value.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a) <= tol * (c.abs() + d.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (mut x, mut fx) = if fc <= fd { (c, fc) } else { (d, fd) };
    for end in [a, b] {
        let fe = f(end);
        if fe < fx {
            x = end;
            fx = fe;
        }
    }
    (x, fx)
}
