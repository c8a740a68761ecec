use irqcount_core::ecdsa::lll::{bkz2, determinant, is_lll_reduced, lll, norm2, Delta};
use irqcount_core::rng::stream;
use irqcount_core::Error;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};
use rand::Rng;

type Basis = Vec<Vec<BigInt>>;

fn random_basis<R: Rng>(rng: &mut R, dim: usize) -> Basis {
    (0..dim)
        .map(|_| (0..dim).map(|_| BigInt::from(rng.random_range(-50i64..=50))).collect())
        .collect()
}

fn minor(b: &Basis, skip_r: usize, skip_c: usize) -> Basis {
    b.iter()
        .enumerate()
        .filter(|(r, _)| *r != skip_r)
        .map(|(_, row)| row.iter().enumerate().filter(|(c, _)| *c != skip_c).map(|(_, x)| x.clone()).collect())
        .collect()
}

/// T with T·B = R, or None when T is not integral.
fn transform(b: &Basis, r: &Basis) -> Option<Basis> {
    let d = b.len();
    let det = determinant(b);
    // adj(B)[j][i] = (-1)^(i+j) det(minor(B, i, j))
    let adj: Basis = (0..d)
        .map(|j| {
            (0..d)
                .map(|i| {
                    let m = if d == 1 { BigInt::from(1) } else { determinant(&minor(b, i, j)) };
                    if (i + j) % 2 == 0 { m } else { -m }
                })
                .collect()
        })
        .collect();
    let mut t = vec![vec![BigInt::zero(); d]; d];
    for i in 0..d {
        for j in 0..d {
            let num: BigInt = (0..d).map(|k| &r[i][k] * &adj[k][j]).sum();
            let (q, rem) = num.div_rem(&det);
            if !rem.is_zero() {
                return None;
            }
            t[i][j] = q;
        }
    }
    Some(t)
}

/// Exhaustive search for the shortest nonzero vector, enumerating
/// coefficients over a well-conditioned basis of the same lattice.
fn shortest_norm2(basis: &Basis) -> BigInt {
    let d = basis.len();
    let f: Vec<Vec<f64>> = basis.iter().map(|r| r.iter().map(|x| x.to_string().parse().unwrap()).collect()).collect();
    // columns of the inverse bound each coefficient: |x_i| <= |v| * |inv[:, i]|
    let inv = invert(&f);
    let upper = basis.iter().map(|r| norm2(r)).min().unwrap();
    let radius = (upper.to_string().parse::<f64>().unwrap()).sqrt();
    let bounds: Vec<i64> = (0..d)
        .map(|i| {
            let col: f64 = (0..d).map(|k| inv[k][i] * inv[k][i]).sum::<f64>().sqrt();
            (radius * col + 1e-6).floor() as i64
        })
        .collect();
    let mut best = upper;
    let mut x = bounds.iter().map(|b| -b).collect::<Vec<_>>();
    loop {
        if x.iter().any(|&v| v != 0) {
            let v: Vec<BigInt> = (0..d)
                .map(|c| (0..d).map(|r| BigInt::from(x[r]) * &basis[r][c]).sum())
                .collect();
            let n = norm2(&v);
            if n < best {
                best = n;
            }
        }
        let mut i = 0;
        loop {
            if i == d {
                return best;
            }
            if x[i] < bounds[i] {
                x[i] += 1;
                break;
            }
            x[i] = -bounds[i];
            i += 1;
        }
    }
}

fn invert(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = m.len();
    let mut a: Vec<Vec<f64>> = m
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..d).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..d {
        let p = (c..d).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())).unwrap();
        a.swap(c, p);
        let pv = a[c][c];
        for v in a[c].iter_mut() {
            *v /= pv;
        }
        for r in 0..d {
            if r != c {
                let f = a[r][c];
                let pivot = a[c].clone();
                for (v, pv) in a[r].iter_mut().zip(pivot) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.into_iter().map(|r| r[d..].to_vec()).collect()
}

#[test]
fn lll_on_random_small_bases_against_enumeration() {
    let mut rng = stream(40, 0);
    let mut checked = 0;
    while checked < 200 {
        let dim = rng.random_range(1..=4);
        let b = random_basis(&mut rng, dim);
        let det = determinant(&b);
        if det.is_zero() {
            assert!(matches!(lll(&b, Delta::DEFAULT), Err(Error::DependentRows)));
            continue;
        }
        let r = lll(&b, Delta::DEFAULT).unwrap();
        assert!(is_lll_reduced(&r, Delta::DEFAULT).unwrap());
        assert_eq!(determinant(&r).abs(), det.abs());
        let t = transform(&b, &r).expect("reduced rows are integer combinations");
        assert_eq!(determinant(&t).abs(), BigInt::from(1));

        let lambda1 = shortest_norm2(&r);
        // |b1|^2 <= 2^(d-1) * lambda1^2
        assert!(norm2(&r[0]) <= lambda1 << (dim - 1), "dim {dim}: {:?}", b);
        checked += 1;
    }
}

#[test]
fn bkz2_output_is_reduced_and_spans_the_same_lattice() {
    let mut rng = stream(41, 0);
    for _ in 0..30 {
        let b = random_basis(&mut rng, 4);
        if determinant(&b).is_zero() {
            continue;
        }
        let r = bkz2(&b).unwrap();
        assert!(is_lll_reduced(&r, Delta::ONE).unwrap());
        let t = transform(&b, &r).unwrap();
        assert_eq!(determinant(&t).abs(), BigInt::from(1));
    }
}

#[test]
fn knapsack_style_basis_reveals_the_planted_vector() {
    // rows (I | a_i * N); the planted combination has coefficients in {0,1}
    let a = [7919i64, 104729, 1299709, 15485863, 179424673, 2038074743];
    let pick = [1, 0, 1, 1, 0, 1];
    let target: i64 = a.iter().zip(pick).map(|(x, p)| x * p).sum();
    let n = BigInt::from(1u64 << 40);
    let dim = a.len() + 1;
    let mut b: Basis = vec![vec![BigInt::zero(); dim]; dim];
    for (i, x) in a.iter().enumerate() {
        b[i][i] = BigInt::from(1);
        b[i][dim - 1] = BigInt::from(*x) * &n;
    }
    b[a.len()][dim - 1] = -BigInt::from(target) * &n;
    let r = lll(&b, Delta::DEFAULT).unwrap();
    assert!(r.iter().any(|row| row[dim - 1].is_zero()
        && row[..a.len()].iter().zip(pick).all(|(x, p)| x.abs() == BigInt::from(p))));
}
