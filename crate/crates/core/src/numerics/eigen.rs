//! Hermitian eigendecomposition by cyclic complex Jacobi rotations.


use crate::error::NumericError;
use crate::model::{CMatrix, CVector, Complex64};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs with eigenvalues sorted in descending order; column `k` of
/// `vectors` pairs with `values[k]`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let u = self.vectors.column(k);
            out += (&u * u.adjoint()) * Complex64::new(lam, 0.0);
        }
        out
    }
}

fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `A - A*`.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Decomposes a Hermitian matrix as `U diag(λ) U*` with `λ` descending.
pub fn hermitian_eig_desc(a: &CMatrix) -> Result<HermitianEigen, NumericError> {
    if a.nrows() != a.ncols() {
        return Err(NumericError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = max_abs(a).max(1.0);
    let defect = hermitian_defect(a);
    if defect > 1e-10 * scale {
        return Err(NumericError::NotHermitian(defect));
    }
    let n = a.nrows();
    // symmetrize so the rotations see an exactly Hermitian matrix
    let mut m = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let mut v = CMatrix::identity(n, n);
    let fro = m.norm().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * fro {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].re.total_cmp(&m[(i, i)].re));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

fn rotate(m: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    let mag = apq.norm();
    if mag == 0.0 {
        return;
    }
    let app = m[(p, p)].re;
    let aqq = m[(q, q)].re;
    if mag <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        m[(p, q)] = Complex64::new(0.0, 0.0);
        m[(q, p)] = Complex64::new(0.0, 0.0);
        return;
    }
    // phase that makes the (p, q) entry real, then a real Jacobi rotation
    let phase = apq / mag;
    let tau = (aqq - app) / (2.0 * mag);
    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
    let t = if tau == 0.0 { 1.0 } else { t };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ph = phase.conj();
    let g = [
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [ph * -s, ph * c],
    ];

    let n = m.nrows();
    for k in 0..n {
        let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = mkp * g[0][0] + mkq * g[1][0];
        m[(k, q)] = mkp * g[0][1] + mkq * g[1][1];
    }
    for k in 0..n {
        let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = g[0][0].conj() * mpk + g[1][0].conj() * mqk;
        m[(q, k)] = g[0][1].conj() * mpk + g[1][1].conj() * mqk;
    }
    m[(p, q)] = Complex64::new(0.0, 0.0);
    m[(q, p)] = Complex64::new(0.0, 0.0);
    m[(p, p)] = Complex64::new(m[(p, p)].re, 0.0);
    m[(q, q)] = Complex64::new(m[(q, q)].re, 0.0);
    for k in 0..n {
        let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = vkp * g[0][0] + vkq * g[1][0];
        v[(k, q)] = vkp * g[0][1] + vkq * g[1][1];
    }
}

/// Thin QR of a tall complex matrix by modified Gram-Schmidt. Columns that are
/// numerically dependent on earlier ones are dropped; the returned `Q` has
/// orthonormal columns spanning the column space and `R = Q* A`.
pub fn thin_qr(a: &CMatrix) -> (CMatrix, CMatrix) {
    let (n, k) = a.shape();
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut cols: Vec<CVector> = Vec::with_capacity(k);
    for j in 0..k {
        let mut v: CVector = a.column(j).into_owned();
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&v);
                v -= q * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-12 * scale && norm > 0.0 {
            cols.push(v / Complex64::new(norm, 0.0));
        }
    }
    let q = if cols.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    let r = q.adjoint() * a;
    (q, r)
}

/// Eigenpairs of `shift * I + Σ_j weight_j v_j v_j*` restricted to the span of
/// the `v_j`, computed through a `K x K` reduction. Returns the leading
/// `count` eigenpairs of the full `N x N` matrix in descending order; when
/// fewer than `count` span eigenvalues exceed `shift`, unit vectors orthogonal
/// to the span (eigenvalue `shift`) fill the gap.
pub fn low_rank_eig_desc(
    vectors: &[CVector],
    weights: &[f64],
    shift: f64,
    count: usize,
) -> Result<HermitianEigen, NumericError> {
    let n = vectors.first().map(|v| v.len()).unwrap_or(0);
    if vectors.is_empty() || n == 0 {
        return Ok(HermitianEigen {
            values: vec![shift; count],
            vectors: CMatrix::zeros(n, count),
        });
    }
    let a = CMatrix::from_columns(vectors);
    let (q, r) = thin_qr(&a);
    let rank = q.ncols();
    let wdiag = CMatrix::from_diagonal(&CVector::from_iterator(
        weights.len(),
        weights.iter().map(|&w| Complex64::new(w, 0.0)),
    ));
    let reduced = &r * wdiag * r.adjoint();
    let reduced = (&reduced + reduced.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = hermitian_eig_desc(&reduced)?;

    let mut pairs: Vec<(f64, CVector)> = (0..rank)
        .map(|k| (eig.values[k] + shift, &q * eig.vectors.column(k)))
        .collect();
    let needed_fill = count.saturating_sub(pairs.iter().filter(|(l, _)| *l >= shift).count());
    if needed_fill > 0 {
        for e in orthogonal_complement(&q, needed_fill.min(n - rank)) {
            pairs.push((shift, e));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(count.min(pairs.len()));
    let values = pairs.iter().map(|p| p.0).collect();
    let cols: Vec<CVector> = pairs.into_iter().map(|p| p.1).collect();
    let vectors = if cols.is_empty() {
        CMatrix::zeros(n, 0)
    } else {
        CMatrix::from_columns(&cols)
    };
    Ok(HermitianEigen { values, vectors })
}

fn orthogonal_complement(q: &CMatrix, count: usize) -> Vec<CVector> {
    let n = q.nrows();
    let mut basis: Vec<CVector> = q.column_iter().map(|c| c.into_owned()).collect();
    let mut out = Vec::new();
    for i in 0..n {
        if out.len() == count {
            break;
        }
        let mut v = CVector::zeros(n);
        v[i] = Complex64::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            let v = v / Complex64::new(norm, 0.0);
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        })
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        for _ in 0..n {
            let v = random_vec(rng, n);
            m += &v * v.adjoint();
        }
        m
    }

    fn unitary_defect(u: &CMatrix) -> f64 {
        let k = u.ncols();
        (u.adjoint() * u - CMatrix::identity(k, k)).norm()
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let e = hermitian_eig_desc(&CMatrix::identity(5, 5)).unwrap();
        assert!(e.values.iter().all(|&l| (l - 1.0).abs() < 1e-15));
        assert!(unitary_defect(&e.vectors) < 1e-12);
    }

    #[test]
    fn rank_one_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_vec(&mut rng, 6);
        let c = &h * h.adjoint();
        let e = hermitian_eig_desc(&c).unwrap();
        assert!((e.values[0] - h.norm_squared()).abs() < 1e-12);
        assert!(e.values[1..].iter().all(|l| l.abs() < 1e-12));
        let u1 = e.vectors.column(0);
        let overlap = u1.dotc(&h).norm() / h.norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn random_psd_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let c = random_psd(&mut rng, 8);
            let e = hermitian_eig_desc(&c).unwrap();
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let resid = (e.reconstruct() - &c).norm();
            assert!(resid <= 1e-8 * c.norm(), "resid {resid:e}");
            assert!(unitary_defect(&e.vectors) < 1e-8);
        }
    }

    #[test]
    fn matches_nalgebra_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_psd(&mut rng, 7);
        let ours = hermitian_eig_desc(&c).unwrap().values;
        let mut theirs: Vec<f64> = c.clone().symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMatrix::identity(3, 3);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        assert!(matches!(
            hermitian_eig_desc(&m),
            Err(NumericError::NotHermitian(_))
        ));
        assert!(hermitian_eig_desc(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn low_rank_matches_full_decomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 12;
        let hs: Vec<CVector> = (0..3).map(|_| random_vec(&mut rng, n)).collect();
        let weights = [0.7, 2.0, 1.1];
        let shift = 0.3;
        let mut full = CMatrix::identity(n, n) * Complex64::new(shift, 0.0);
        for (h, &w) in hs.iter().zip(&weights) {
            full += (h * h.adjoint()) * Complex64::new(w, 0.0);
        }
        let reference = hermitian_eig_desc(&full).unwrap();
        let fast = low_rank_eig_desc(&hs, &weights, shift, 3).unwrap();
        for k in 0..3 {
            assert!((fast.values[k] - reference.values[k]).abs() < 1e-10);
            let overlap = fast.vectors.column(k).dotc(&reference.vectors.column(k)).norm();
            assert!((overlap - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn low_rank_fills_with_complement_for_negative_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 6;
        let hs: Vec<CVector> = (0..2).map(|_| random_vec(&mut rng, n)).collect();
        let e = low_rank_eig_desc(&hs, &[1.0, -1.0], 0.0, 2).unwrap();
        assert!(e.values[0] > 0.0);
        assert_eq!(e.values[1], 0.0);
        assert!(unitary_defect(&e.vectors) < 1e-10);
    }
}
