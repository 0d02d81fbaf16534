//! Small NLPs with known minimizers, shared by the KKT battery and the
//! acceptance target.

use conproj_core::solvers::{NlpDerivatives, NlpProblem, NlpValues, SolverOptions};
use nalgebra::{DMatrix, DVector};

type Scalar = Box<dyn Fn(&DVector<f64>) -> f64>;
type Vector = Box<dyn Fn(&DVector<f64>) -> DVector<f64>>;
type Matrix = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64>>;

pub struct Case {
    pub name: &'static str,
    pub dim: usize,
    pub start: DVector<f64>,
    pub expected: DVector<f64>,
    /// Allowed ∞-norm distance to `expected`.
    pub tol: f64,
    objective: Scalar,
    gradient: Vector,
    eq: Option<(Vector, Matrix)>,
    ineq: Option<(Vector, Matrix)>,
}

impl NlpProblem for Case {
    fn dim(&self) -> usize {
        self.dim
    }

    fn values(&self, x: &DVector<f64>) -> NlpValues {
        NlpValues {
            objective: (self.objective)(x),
            eq: self.eq.as_ref().map_or_else(|| DVector::zeros(0), |(c, _)| c(x)),
            ineq: self.ineq.as_ref().map_or_else(|| DVector::zeros(0), |(c, _)| c(x)),
        }
    }

    fn derivatives(&self, x: &DVector<f64>) -> NlpDerivatives {
        NlpDerivatives {
            gradient: (self.gradient)(x),
            eq_jacobian: self.eq.as_ref().map_or_else(|| DMatrix::zeros(0, self.dim), |(_, j)| j(x)),
            ineq_jacobian: self.ineq.as_ref().map_or_else(|| DMatrix::zeros(0, self.dim), |(_, j)| j(x)),
            hessian: None,
        }
    }
}

impl Case {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            max_iter: 300,
            ..SolverOptions::default()
        }
        .with_warm_start(self.start.clone())
    }

    pub fn objective_at(&self, x: &DVector<f64>) -> f64 {
        (self.objective)(x)
    }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(xs)
}

fn rows(n: usize, xs: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, xs.len() / n, xs)
}

fn polygon_ineq(x: &DVector<f64>) -> DVector<f64> {
    v(&[
        x[0] - 2.0 * x[1] + 2.0,
        -x[0] - 2.0 * x[1] + 6.0,
        -x[0] + 2.0 * x[1] + 2.0,
        x[0],
        x[1],
    ])
}

fn polygon_objective(x: &DVector<f64>) -> f64 {
    (x[0] - 1.0).powi(2) + (x[1] - 2.5).powi(2)
}

/// Feasible grid point of the polygon QP with the smallest objective, at
/// resolution 1e-3.
pub fn polygon_grid_oracle() -> DVector<f64> {
    let mut best = (f64::INFINITY, v(&[0.0, 0.0]));
    for i in 0..=4000 {
        for j in 0..=4000 {
            let x = v(&[i as f64 * 1e-3, j as f64 * 1e-3]);
            if polygon_ineq(&x).iter().all(|&g| g >= -1e-12) {
                let f = polygon_objective(&x);
                if f < best.0 {
                    best = (f, x);
                }
            }
        }
    }
    best.1
}

pub fn cases() -> Vec<Case> {
    let hs071 = v(&[1.0, 4.742_999_63, 3.821_149_98, 1.379_408_29]);
    let spd = rows(
        4,
        &[
            4.0, 1.0, 0.0, 0.5, //
            1.0, 3.0, 0.2, 0.0, //
            0.0, 0.2, 2.0, 0.3, //
            0.5, 0.0, 0.3, 1.5,
        ],
    );
    let rhs = v(&[1.0, -2.0, 0.5, 3.0]);
    let spd_solution = spd.clone().lu().solve(&rhs).unwrap();
    let (a1, a2) = (spd.clone(), spd);
    let (b1, b2) = (rhs.clone(), rhs);
    let h = core::f64::consts::FRAC_1_SQRT_2;
    vec![
        Case {
            name: "hyperplane projection",
            dim: 3,
            start: v(&[0.0, 0.0, 0.0]),
            expected: v(&[1.0, 0.0, 0.0]),
            tol: 1e-8,
            objective: Box::new(|x| 0.5 * x.norm_squared()),
            gradient: Box::new(|x| x.clone()),
            eq: Some((Box::new(|x| v(&[x[0] - 1.0])), Box::new(|_| rows(1, &[1.0, 0.0, 0.0])))),
            ineq: None,
        },
        Case {
            name: "clipped quadratic",
            dim: 1,
            start: v(&[0.0]),
            expected: v(&[1.0]),
            tol: 1e-8,
            objective: Box::new(|x| (x[0] - 2.0).powi(2)),
            gradient: Box::new(|x| v(&[2.0 * (x[0] - 2.0)])),
            eq: None,
            ineq: Some((Box::new(|x| v(&[1.0 - x[0]])), Box::new(|_| rows(1, &[-1.0])))),
        },
        Case {
            name: "polygon QP",
            dim: 2,
            start: v(&[2.0, 0.0]),
            expected: v(&[1.4, 1.7]),
            tol: 1e-4,
            objective: Box::new(polygon_objective),
            gradient: Box::new(|x| v(&[2.0 * (x[0] - 1.0), 2.0 * (x[1] - 2.5)])),
            eq: None,
            ineq: Some((
                Box::new(polygon_ineq),
                Box::new(|_| rows(5, &[1.0, -2.0, -1.0, -2.0, -1.0, 2.0, 1.0, 0.0, 0.0, 1.0])),
            )),
        },
        Case {
            name: "Rosenbrock",
            dim: 2,
            start: v(&[-1.2, 1.0]),
            expected: v(&[1.0, 1.0]),
            tol: 1e-5,
            objective: Box::new(|x| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2)),
            gradient: Box::new(|x| {
                v(&[
                    -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]),
                    200.0 * (x[1] - x[0] * x[0]),
                ])
            }),
            eq: None,
            ineq: None,
        },
        Case {
            name: "HS071",
            dim: 4,
            start: v(&[1.0, 5.0, 5.0, 1.0]),
            expected: hs071,
            tol: 1e-5,
            objective: Box::new(|x| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]),
            gradient: Box::new(|x| {
                v(&[
                    x[3] * (2.0 * x[0] + x[1] + x[2]),
                    x[0] * x[3],
                    x[0] * x[3] + 1.0,
                    x[0] * (x[0] + x[1] + x[2]),
                ])
            }),
            eq: Some((
                Box::new(|x| v(&[x.norm_squared() - 40.0])),
                Box::new(|x| rows(1, &[2.0 * x[0], 2.0 * x[1], 2.0 * x[2], 2.0 * x[3]])),
            )),
            ineq: Some((
                Box::new(|x| {
                    let mut g = vec![x[0] * x[1] * x[2] * x[3] - 25.0];
                    g.extend(x.iter().map(|xi| xi - 1.0));
                    g.extend(x.iter().map(|xi| 5.0 - xi));
                    DVector::from_vec(g)
                }),
                Box::new(|x| {
                    let mut j = DMatrix::zeros(9, 4);
                    j[(0, 0)] = x[1] * x[2] * x[3];
                    j[(0, 1)] = x[0] * x[2] * x[3];
                    j[(0, 2)] = x[0] * x[1] * x[3];
                    j[(0, 3)] = x[0] * x[1] * x[2];
                    for i in 0..4 {
                        j[(1 + i, i)] = 1.0;
                        j[(5 + i, i)] = -1.0;
                    }
                    j
                }),
            )),
        },
        Case {
            name: "HS035",
            dim: 3,
            start: v(&[0.5, 0.5, 0.5]),
            expected: v(&[4.0 / 3.0, 7.0 / 9.0, 4.0 / 9.0]),
            tol: 1e-6,
            objective: Box::new(|x| {
                9.0 - 8.0 * x[0] - 6.0 * x[1] - 4.0 * x[2]
                    + 2.0 * x[0] * x[0]
                    + 2.0 * x[1] * x[1]
                    + x[2] * x[2]
                    + 2.0 * x[0] * x[1]
                    + 2.0 * x[0] * x[2]
            }),
            gradient: Box::new(|x| {
                v(&[
                    -8.0 + 4.0 * x[0] + 2.0 * x[1] + 2.0 * x[2],
                    -6.0 + 4.0 * x[1] + 2.0 * x[0],
                    -4.0 + 2.0 * x[2] + 2.0 * x[0],
                ])
            }),
            eq: None,
            ineq: Some((
                Box::new(|x| v(&[3.0 - x[0] - x[1] - 2.0 * x[2], x[0], x[1], x[2]])),
                Box::new(|_| rows(4, &[-1.0, -1.0, -2.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])),
            )),
        },
        Case {
            name: "linear objective on a circle",
            dim: 2,
            start: v(&[-1.5, -0.5]),
            expected: v(&[-1.0, -1.0]),
            tol: 1e-6,
            objective: Box::new(|x| x[0] + x[1]),
            gradient: Box::new(|_| v(&[1.0, 1.0])),
            eq: Some((
                Box::new(|x| v(&[x.norm_squared() - 2.0])),
                Box::new(|x| rows(1, &[2.0 * x[0], 2.0 * x[1]])),
            )),
            ineq: None,
        },
        Case {
            name: "HS021",
            dim: 2,
            start: v(&[-1.0, -1.0]),
            expected: v(&[2.0, 0.0]),
            tol: 1e-6,
            objective: Box::new(|x| 0.01 * x[0] * x[0] + x[1] * x[1] - 100.0),
            gradient: Box::new(|x| v(&[0.02 * x[0], 2.0 * x[1]])),
            eq: None,
            ineq: Some((
                Box::new(|x| v(&[10.0 * x[0] - x[1] - 10.0, x[0] - 2.0, 50.0 - x[0], x[1] + 50.0, 50.0 - x[1]])),
                Box::new(|_| rows(5, &[10.0, -1.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0])),
            )),
        },
        Case {
            name: "unconstrained convex quadratic",
            dim: 4,
            start: v(&[0.0, 0.0, 0.0, 0.0]),
            expected: spd_solution,
            tol: 1e-8,
            objective: Box::new(move |x| 0.5 * x.dot(&(&a1 * x)) - b1.dot(x)),
            gradient: Box::new(move |x| &a2 * x - &b2),
            eq: None,
            ineq: None,
        },
        Case {
            name: "closest point of the unit disk",
            dim: 2,
            start: v(&[0.0, 0.0]),
            expected: v(&[h, h]),
            tol: 1e-6,
            objective: Box::new(|x| (x[0] - 2.0).powi(2) + (x[1] - 2.0).powi(2)),
            gradient: Box::new(|x| v(&[2.0 * (x[0] - 2.0), 2.0 * (x[1] - 2.0)])),
            eq: None,
            ineq: Some((
                Box::new(|x| v(&[1.0 - x.norm_squared()])),
                Box::new(|x| rows(1, &[-2.0 * x[0], -2.0 * x[1]])),
            )),
        },
        Case {
            name: "HS028",
            dim: 3,
            start: v(&[-4.0, 1.0, 1.0]),
            expected: v(&[0.5, -0.5, 0.5]),
            tol: 1e-6,
            objective: Box::new(|x| (x[0] + x[1]).powi(2) + (x[1] + x[2]).powi(2)),
            gradient: Box::new(|x| {
                v(&[
                    2.0 * (x[0] + x[1]),
                    2.0 * (x[0] + x[1]) + 2.0 * (x[1] + x[2]),
                    2.0 * (x[1] + x[2]),
                ])
            }),
            eq: Some((
                Box::new(|x| v(&[x[0] + 2.0 * x[1] + 3.0 * x[2] - 1.0])),
                Box::new(|_| rows(1, &[1.0, 2.0, 3.0])),
            )),
            ineq: None,
        },
        Case {
            name: "HS006",
            dim: 2,
            start: v(&[-1.2, 1.0]),
            expected: v(&[1.0, 1.0]),
            tol: 1e-6,
            objective: Box::new(|x| (1.0 - x[0]).powi(2)),
            gradient: Box::new(|x| v(&[-2.0 * (1.0 - x[0]), 0.0])),
            eq: Some((
                Box::new(|x| v(&[10.0 * (x[1] - x[0] * x[0])])),
                Box::new(|x| rows(1, &[-20.0 * x[0], 10.0])),
            )),
            ineq: None,
        },
    ]
}
