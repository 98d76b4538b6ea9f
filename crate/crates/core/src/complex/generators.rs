use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::OrientedSimplicialComplex;
use crate::{Error, Real, Result};

/// Torus embedding radii.
pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.35;

/// Synthetic test topologies.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeSpec {
    Cycle(usize),
    Icosphere(usize),
    TorusGrid(usize, usize),
    /// `n³` cubes of the unit box, six tetrahedra each.
    TetGrid(usize),
    DisjointUnion(Box<ShapeSpec>, Box<ShapeSpec>),
}

impl fmt::Display for ShapeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeSpec::Cycle(n) => write!(f, "cycle:{n}"),
            ShapeSpec::Icosphere(s) => write!(f, "icosphere:{s}"),
            ShapeSpec::TorusGrid(n, m) => write!(f, "torus:{n},{m}"),
            ShapeSpec::TetGrid(n) => write!(f, "tetgrid:{n}"),
            ShapeSpec::DisjointUnion(a, b) => write!(f, "union:{a}+{b}"),
        }
    }
}

impl FromStr for ShapeSpec {
    type Err = Error;

    /// Parses `cycle:N`, `icosphere:S`, `torus:N,M`, `tetgrid:N`, `union:A+B`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("generator '{s}' lacks ':' arguments")))?;
        let nums = || -> Result<Vec<usize>> {
            args.split(',')
                .map(|a| a.trim().parse().map_err(|_| Error::Parse(format!("bad integer '{a}' in '{s}'"))))
                .collect()
        };
        let one = |v: Vec<usize>| -> Result<usize> {
            match v[..] {
                [n] => Ok(n),
                _ => Err(Error::Parse(format!("'{s}' expects one argument"))),
            }
        };
        match name {
            "cycle" => Ok(ShapeSpec::Cycle(one(nums()?)?)),
            "icosphere" => Ok(ShapeSpec::Icosphere(one(nums()?)?)),
            "tetgrid" => Ok(ShapeSpec::TetGrid(one(nums()?)?)),
            "torus" | "torus_grid" => match nums()?[..] {
                [n, m] => Ok(ShapeSpec::TorusGrid(n, m)),
                _ => Err(Error::Parse(format!("'{s}' expects two arguments"))),
            },
            "union" => {
                let (a, b) = args
                    .split_once('+')
                    .ok_or_else(|| Error::Parse(format!("'{s}' expects union:A+B")))?;
                Ok(ShapeSpec::DisjointUnion(Box::new(a.parse()?), Box::new(b.parse()?)))
            }
            _ => Err(Error::Parse(format!("unknown generator '{name}'"))),
        }
    }
}

impl ShapeSpec {
    /// Betti numbers implied by the generator, padded to the generated dimension.
    pub fn expected_betti(&self) -> Vec<usize> {
        match self {
            ShapeSpec::Cycle(_) => vec![1, 1],
            ShapeSpec::Icosphere(_) => vec![1, 0, 1],
            ShapeSpec::TorusGrid(..) => vec![1, 2, 1],
            ShapeSpec::TetGrid(_) => vec![1, 0, 0, 0],
            ShapeSpec::DisjointUnion(a, b) => {
                let (a, b) = (a.expected_betti(), b.expected_betti());
                let n = a.len().max(b.len());
                (0..n).map(|k| a.get(k).unwrap_or(&0) + b.get(k).unwrap_or(&0)).collect()
            }
        }
    }
}

pub(super) fn generate<T: Real>(shape: &ShapeSpec) -> Result<OrientedSimplicialComplex<T>> {
    let (coords, dims, simplices) = raw(shape)?;
    let coords = coords.into_iter().map(|p| p.map(T::of)).collect();
    OrientedSimplicialComplex::build(coords, dims, &simplices)
}

type Raw = (Vec<[f64; 3]>, usize, Vec<Vec<usize>>);

fn raw(shape: &ShapeSpec) -> Result<Raw> {
    match *shape {
        ShapeSpec::Cycle(n) => {
            if n < 3 {
                return Err(Error::InvalidParameter(format!("cycle needs n ≥ 3, got {n}")));
            }
            let coords = (0..n)
                .map(|i| {
                    let t = 2.0 * PI * i as f64 / n as f64;
                    [t.cos(), t.sin(), 0.0]
                })
                .collect();
            let edges = (0..n).map(|i| vec![i, (i + 1) % n]).collect();
            Ok((coords, 1, edges))
        }
        ShapeSpec::Icosphere(subdiv) => {
            let (coords, faces) = icosphere(subdiv);
            Ok((coords, 2, faces.into_iter().map(|f| f.to_vec()).collect()))
        }
        ShapeSpec::TorusGrid(n, m) => {
            if n < 3 || m < 3 {
                return Err(Error::InvalidParameter(format!("torus grid needs n,m ≥ 3, got {n},{m}")));
            }
            let (coords, faces) = torus(n, m);
            Ok((coords, 2, faces.into_iter().map(|f| f.to_vec()).collect()))
        }
        ShapeSpec::TetGrid(n) => {
            if n < 1 {
                return Err(Error::InvalidParameter("tet grid needs n ≥ 1".into()));
            }
            let (coords, tets) = tet_grid(n, 0.0, 0);
            Ok((coords, 3, tets.into_iter().map(|t| t.to_vec()).collect()))
        }
        ShapeSpec::DisjointUnion(ref a, ref b) => {
            let (mut ca, da, mut sa) = raw(a)?;
            let (cb, db, sb) = raw(b)?;
            let offset = ca.len();
            // keep the pieces apart in space
            let shift = ca.iter().map(|p| p[0]).fold(f64::MIN, f64::max)
                - cb.iter().map(|p| p[0]).fold(f64::MAX, f64::min)
                + 1.0;
            ca.extend(cb.into_iter().map(|p| [p[0] + shift, p[1], p[2]]));
            sa.extend(sb.into_iter().map(|s| s.into_iter().map(|v| v + offset).collect()));
            Ok((ca, da.max(db), sa))
        }
    }
}

/// Standard torus, vertex `(i, j)` at index `i * m + j` with angles `θ = 2πi/n`, `φ = 2πj/m`.
pub(crate) fn torus(n: usize, m: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let mut coords = Vec::with_capacity(n * m);
    for i in 0..n {
        let th = 2.0 * PI * i as f64 / n as f64;
        for j in 0..m {
            let ph = 2.0 * PI * j as f64 / m as f64;
            let rho = TORUS_MAJOR + TORUS_MINOR * ph.cos();
            coords.push([rho * th.cos(), rho * th.sin(), TORUS_MINOR * ph.sin()]);
        }
    }
    let id = |i: usize, j: usize| (i % n) * m + (j % m);
    let mut faces = Vec::with_capacity(2 * n * m);
    for i in 0..n {
        for j in 0..m {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (coords, faces)
}

fn icosphere(subdiv: usize) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut coords: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .into_iter()
    .map(normalize)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdiv {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, coords: &mut Vec<[f64; 3]>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (coords[a], coords[b]);
                coords.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                coords.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut coords);
            let bc = midpoint(b, c, &mut coords);
            let ca = midpoint(c, a, &mut coords);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (coords, faces)
}

fn normalize(p: [f64; 3]) -> [f64; 3] {
    let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / r, p[1] / r, p[2] / r]
}

/// Freudenthal triangulation of the unit cube split into `n³` cells (six tets per cell).
///
/// Interior vertices are displaced uniformly by up to `jitter` times the cell size.
pub fn tet_grid(n: usize, jitter: f64, seed: u64) -> (Vec<[f64; 3]>, Vec<[usize; 4]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1.0 / n as f64;
    let id = |i: usize, j: usize, k: usize| (i * (n + 1) + j) * (n + 1) + k;
    let mut coords = Vec::with_capacity((n + 1).pow(3));
    for i in 0..=n {
        for j in 0..=n {
            for k in 0..=n {
                let mut p = [i as f64 * h, j as f64 * h, k as f64 * h];
                let interior = [i, j, k].iter().all(|&c| c > 0 && c < n);
                if interior && jitter > 0.0 {
                    for c in &mut p {
                        *c += rng.random_range(-jitter..jitter) * h;
                    }
                }
                coords.push(p);
            }
        }
    }
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for perm in PERMS {
                    let mut c = [i, j, k];
                    let mut t = [id(c[0], c[1], c[2]); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        c[axis] += 1;
                        t[s + 1] = id(c[0], c[1], c[2]);
                    }
                    tets.push(t);
                }
            }
        }
    }
    (coords, tets)
}
