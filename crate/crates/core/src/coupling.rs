//! The coupled FEM-BEM system on `B` and `D∖B̄` for one boundary sample.
//!
//! Unknowns are the nodal values of `ũ` on `B` and the piecewise-constant
//! fluxes `σ_Σ`, `σ_Γ`. The interior finite element unknowns enter only the
//! sparse stiffness rows, so they are eliminated once per level; each sample
//! then solves a dense system of size `n_Σ + n_Σ + n_Γ`.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::bem::{assemble_boundary_load, assemble_mass_b, assemble_mass_g, assemble_pair, QuadratureOrders};
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, newton_potential, sparse_apply, FeFunction};
use crate::geometry::{PerturbationSpec, Point, SampleVector};
use crate::mesh::{build_disk_mesh, build_gamma_mesh, build_sigma_mesh, BoundaryMesh, DiskMesh};

/// Everything on the fixed side of the coupling for one level: the disk mesh,
/// the stiffness matrix, the `Σ`-`Σ` boundary element blocks and the
/// elimination of interior finite element unknowns.
pub struct SigmaSide {
    pub disk: DiskMesh,
    pub sigma: BoundaryMesh,
    pub stiffness: SparseColMat<usize, f64>,
    /// `V_ΣΣ`
    pub v: Mat<f64>,
    /// `K_ΣΣ`, panels × nodes
    pub k: Mat<f64>,
    /// `W_ΣΣ`
    pub w: Mat<f64>,
    /// `B_Σ`, panels × nodes
    pub b: Mat<f64>,
    interior: Vec<usize>,
    interior_llt: Option<Llt<usize, f64>>,
    /// `A_IS` column by column: `(interior position, value)` for each `Σ` node
    coupling: Vec<Vec<(usize, f64)>>,
    /// `A_SS - A_SI A_II⁻¹ A_IS`
    schur: Mat<f64>,
}

impl std::fmt::Debug for SigmaSide {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SigmaSide")
            .field("level", &self.disk.level)
            .field("fe_dofs", &self.disk.vertex_count())
            .field("sigma_panels", &self.sigma.panel_count())
            .finish()
    }
}

const SCHUR_BLOCK: usize = 64;

impl SigmaSide {
    pub fn new(level: usize, orders: QuadratureOrders) -> Result<Self> {
        let disk = build_disk_mesh(level);
        let sigma = build_sigma_mesh(&disk);
        let stiffness = assemble_stiffness(&disk);
        let pair = assemble_pair(&sigma, &sigma, orders)?;
        let b = assemble_mass_b(&sigma, orders);

        let n_fe = disk.vertex_count();
        let n_s = sigma.node_count();
        // position of each vertex among interior (Ok) or boundary (Err) unknowns
        let mut slot: Vec<std::result::Result<usize, usize>> = vec![Ok(usize::MAX); n_fe];
        for (j, &v) in disk.boundary_loop.iter().enumerate() {
            slot[v] = Err(j);
        }
        let mut interior = Vec::with_capacity(n_fe - n_s);
        for (v, s) in slot.iter_mut().enumerate() {
            if s.is_ok() {
                *s = Ok(interior.len());
                interior.push(v);
            }
        }

        let mut a_ii = Vec::new();
        let mut coupling = vec![Vec::new(); n_s];
        let mut schur = Mat::<f64>::zeros(n_s, n_s);
        let a = stiffness.as_ref();
        for col in 0..n_fe {
            for (row, &val) in a.row_idx_of_col(col).zip(a.val_of_col(col)) {
                match (slot[row], slot[col]) {
                    (Ok(i), Ok(j)) => a_ii.push(Triplet::new(i, j, val)),
                    (Ok(i), Err(j)) => coupling[j].push((i, val)),
                    (Err(i), Err(j)) => schur[(i, j)] += val,
                    (Err(_), Ok(_)) => {}
                }
            }
        }

        let n_i = interior.len();
        let interior_llt = if n_i > 0 {
            let a_ii = SparseColMat::try_new_from_triplets(n_i, n_i, &a_ii)
                .map_err(|e| Error::SingularSystem(format!("interior stiffness: {e:?}")))?;
            let llt = a_ii
                .sp_cholesky(Side::Lower)
                .map_err(|e| Error::SingularSystem(format!("interior stiffness: {e:?}")))?;
            for start in (0..n_s).step_by(SCHUR_BLOCK) {
                let end = (start + SCHUR_BLOCK).min(n_s);
                let mut x = Mat::<f64>::zeros(n_i, end - start);
                for j in start..end {
                    for &(i, val) in &coupling[j] {
                        x[(i, j - start)] = val;
                    }
                }
                let x = llt.solve(&x);
                for (r, col) in coupling.iter().enumerate() {
                    for j in start..end {
                        let s: f64 = col.iter().map(|&(i, val)| val * x[(i, j - start)]).sum();
                        schur[(r, j)] -= s;
                    }
                }
            }
            Some(llt)
        } else {
            None
        };

        Ok(Self { disk, sigma, stiffness, v: pair.v, k: pair.k, w: pair.w, b, interior, interior_llt, coupling, schur })
    }

    pub fn level(&self) -> usize {
        self.disk.level
    }

    /// Interior values of the discrete harmonic extension of the given `Σ` values.
    fn extend(&self, boundary: &[f64]) -> Vec<f64> {
        let n_i = self.interior.len();
        let Some(llt) = &self.interior_llt else { return Vec::new() };
        let mut rhs = Mat::<f64>::zeros(n_i, 1);
        for (col, &u) in self.coupling.iter().zip(boundary) {
            for &(i, val) in col {
                rhs[(i, 0)] -= val * u;
            }
        }
        let x = llt.solve(&rhs);
        (0..n_i).map(|i| x[(i, 0)]).collect()
    }
}

/// The assembled block system
///
/// ```text
/// [ A + W_ΣΣ    K_ΣΣᵀ - B_Σᵀ   K_ΣΓᵀ ] [ ũ   ]   [ -W_ΓΣ       ]
/// [ B_Σ - K_ΣΣ  V_ΣΣ           V_ΓΣ  ] [ σ_Σ ] = [  K_ΓΣ       ] G_Γ⁻¹ g
/// [ -K_ΣΓ       V_ΣΓ           V_ΓΓ  ] [ σ_Γ ]   [  K_ΓΓ - B_Γ ]
/// ```
///
/// with the `Σ` blocks shared through [`SigmaSide`].
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub sigma_side: Arc<SigmaSide>,
    pub gamma: BoundaryMesh,
    /// `V_ΓΣ`: `Σ` panels × `Γ` panels
    pub v_gs: Mat<f64>,
    /// `K_ΣΓ`: `Γ` panels × `Σ` nodes
    pub k_sg: Mat<f64>,
    /// `V_ΓΓ`
    pub v_gg: Mat<f64>,
    pub rhs: Vec<f64>,
}

impl BlockSystem {
    pub fn n_fe(&self) -> usize {
        self.sigma_side.disk.vertex_count()
    }

    pub fn n_sigma(&self) -> usize {
        self.sigma_side.sigma.panel_count()
    }

    pub fn n_gamma(&self) -> usize {
        self.gamma.panel_count()
    }

    pub fn dimension(&self) -> usize {
        self.n_fe() + self.n_sigma() + self.n_gamma()
    }

    /// Product of the full block matrix with `x = (ũ, σ_Σ, σ_Γ)`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let side = &*self.sigma_side;
        let (n_fe, n_s, n_g) = (self.n_fe(), self.n_sigma(), self.n_gamma());
        let (u, rest) = x.split_at(n_fe);
        let (s_sigma, s_gamma) = rest.split_at(n_s);
        let loop_ = &side.disk.boundary_loop;
        let trace: Vec<f64> = loop_.iter().map(|&v| u[v]).collect();

        let mut out = sparse_apply(&side.stiffness, u);
        out.resize(n_fe + n_s + n_g, 0.0);
        for (j, &v) in loop_.iter().enumerate() {
            let mut acc = 0.0;
            for m in 0..n_s {
                acc += side.w[(j, m)] * trace[m];
                acc += (side.k[(m, j)] - side.b[(m, j)]) * s_sigma[m];
            }
            for q in 0..n_g {
                acc += self.k_sg[(q, j)] * s_gamma[q];
            }
            out[v] += acc;
        }
        for p in 0..n_s {
            let mut acc = 0.0;
            for m in 0..n_s {
                acc += (side.b[(p, m)] - side.k[(p, m)]) * trace[m];
                acc += side.v[(p, m)] * s_sigma[m];
            }
            for q in 0..n_g {
                acc += self.v_gs[(p, q)] * s_gamma[q];
            }
            out[n_fe + p] = acc;
        }
        for q in 0..n_g {
            let mut acc = 0.0;
            for m in 0..n_s {
                acc -= self.k_sg[(q, m)] * trace[m];
                acc += self.v_gs[(m, q)] * s_sigma[m];
            }
            for r in 0..n_g {
                acc += self.v_gg[(q, r)] * s_gamma[r];
            }
            out[n_fe + n_s + q] = acc;
        }
        out
    }

    /// The full matrix, column by column through [`BlockSystem::apply`].
    /// Meant for small levels.
    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dimension();
        let mut m = Mat::<f64>::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            for (i, v) in self.apply(&e).into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = 0.0;
        }
        m
    }
}

/// Solver for one level: caches the `Σ` side and assembles the sample-dependent
/// blocks on demand.
#[derive(Debug, Clone)]
pub struct LevelSolver {
    sigma_side: Arc<SigmaSide>,
    orders: QuadratureOrders,
}

impl LevelSolver {
    pub fn new(level: usize, orders: QuadratureOrders) -> Result<Self> {
        Ok(Self { sigma_side: Arc::new(SigmaSide::new(level, orders)?), orders })
    }

    pub fn level(&self) -> usize {
        self.sigma_side.level()
    }

    pub fn sigma_side(&self) -> &Arc<SigmaSide> {
        &self.sigma_side
    }

    pub fn disk(&self) -> &DiskMesh {
        &self.sigma_side.disk
    }

    /// Assembles the system for an arbitrary outer curve with Dirichlet data
    /// `dirichlet` for `ũ` on it.
    pub fn assemble(&self, gamma: BoundaryMesh, dirichlet: &dyn Fn(Point) -> f64) -> Result<BlockSystem> {
        let side = &*self.sigma_side;
        let self_pair = assemble_pair(&gamma, &gamma, self.orders)?;
        let cross = assemble_pair(&gamma, &side.sigma, self.orders)?;
        let b_g = assemble_mass_b(&gamma, self.orders);
        let g_mass = assemble_mass_g(&gamma, self.orders);
        let load = assemble_boundary_load(&gamma, dirichlet, self.orders);

        let (n_fe, n_s, n_g) = (side.disk.vertex_count(), side.sigma.panel_count(), gamma.panel_count());
        let mut load_mat = Mat::<f64>::zeros(n_g, 1);
        for (k, &g) in load.iter().enumerate() {
            load_mat[(k, 0)] = g;
        }
        let projected = g_mass
            .llt(Side::Lower)
            .map_err(|e| Error::SingularSystem(format!("boundary mass matrix: {e:?}")))?
            .solve(&load_mat);
        let c: Vec<f64> = (0..n_g).map(|k| projected[(k, 0)]).collect();

        let mut rhs = vec![0.0; n_fe + n_s + n_g];
        for (j, &v) in side.disk.boundary_loop.iter().enumerate() {
            rhs[v] = -(0..n_g).map(|k| cross.w[(j, k)] * c[k]).sum::<f64>();
        }
        for p in 0..n_s {
            rhs[n_fe + p] = (0..n_g).map(|k| cross.k[(p, k)] * c[k]).sum();
        }
        for q in 0..n_g {
            rhs[n_fe + n_s + q] = (0..n_g).map(|k| (self_pair.k[(q, k)] - b_g[(q, k)]) * c[k]).sum();
        }

        Ok(BlockSystem {
            sigma_side: Arc::clone(&self.sigma_side),
            gamma,
            v_gs: cross.v,
            k_sg: cross.k_reverse,
            v_gg: self_pair.v,
            rhs,
        })
    }

    /// System for the boundary sample `y` with the Newton-potential data.
    pub fn assemble_sample(&self, y: &SampleVector, spec: &PerturbationSpec) -> Result<BlockSystem> {
        let gamma = build_gamma_mesh(y, spec, self.level())?;
        self.assemble(gamma, &|x| -newton_potential(x))
    }

    /// `u_h = I N_f + ũ_h` on `B` for the boundary sample `y`.
    pub fn solve_sample(&self, y: &SampleVector, spec: &PerturbationSpec) -> Result<FeFunction> {
        let solution = solve(&self.assemble_sample(y, spec)?)?;
        let disk = self.disk();
        let mut u = FeFunction::interpolate(disk, newton_potential);
        for (a, b) in u.coefficients.iter_mut().zip(&solution.u_tilde.coefficients) {
            *a += b;
        }
        Ok(u)
    }
}

/// Solution of one block system.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub u_tilde: FeFunction,
    pub sigma_sigma: Vec<f64>,
    pub sigma_gamma: Vec<f64>,
    /// `‖M x - b‖ / ‖b‖`, zero for a zero right-hand side
    pub relative_residual: f64,
}

impl CoupledSolution {
    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.u_tilde.coefficients.clone();
        x.extend_from_slice(&self.sigma_sigma);
        x.extend_from_slice(&self.sigma_gamma);
        x
    }
}

/// Direct solve: the interior unknowns are eliminated through the cached
/// Schur complement, the remaining dense system is factored by LU with
/// partial pivoting.
pub fn solve(system: &BlockSystem) -> Result<CoupledSolution> {
    let side = &*system.sigma_side;
    let (n_fe, n_s, n_g) = (system.n_fe(), system.n_sigma(), system.n_gamma());
    let n = 2 * n_s + n_g;
    let loop_ = &side.disk.boundary_loop;

    let mut m = Mat::<f64>::zeros(n, n);
    let mut rhs = Mat::<f64>::zeros(n, 1);
    for i in 0..n_s {
        rhs[(i, 0)] = system.rhs[loop_[i]];
        rhs[(n_s + i, 0)] = system.rhs[n_fe + i];
        for j in 0..n_s {
            m[(i, j)] = side.schur[(i, j)] + side.w[(i, j)];
            m[(i, n_s + j)] = side.k[(j, i)] - side.b[(j, i)];
            m[(n_s + i, j)] = side.b[(i, j)] - side.k[(i, j)];
            m[(n_s + i, n_s + j)] = side.v[(i, j)];
        }
        for q in 0..n_g {
            m[(i, 2 * n_s + q)] = system.k_sg[(q, i)];
            m[(n_s + i, 2 * n_s + q)] = system.v_gs[(i, q)];
            m[(2 * n_s + q, i)] = -system.k_sg[(q, i)];
            m[(2 * n_s + q, n_s + i)] = system.v_gs[(i, q)];
        }
    }
    for q in 0..n_g {
        rhs[(2 * n_s + q, 0)] = system.rhs[n_fe + n_s + q];
        for r in 0..n_g {
            m[(2 * n_s + q, 2 * n_s + r)] = system.v_gg[(q, r)];
        }
    }
    // interior rows carry no load in the coupled system
    debug_assert!(side.interior.iter().all(|&v| system.rhs[v] == 0.0));

    let x = m.partial_piv_lu().solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("dense factorization broke down".into()));
    }

    let trace = &x[..n_s];
    let mut u = vec![0.0; n_fe];
    for (j, &v) in loop_.iter().enumerate() {
        u[v] = trace[j];
    }
    for (&v, val) in side.interior.iter().zip(side.extend(trace)) {
        u[v] = val;
    }
    let u_tilde = FeFunction { level: side.level(), coefficients: u };
    let mut solution = CoupledSolution {
        u_tilde,
        sigma_sigma: x[n_s..2 * n_s].to_vec(),
        sigma_gamma: x[2 * n_s..].to_vec(),
        relative_residual: 0.0,
    };
    let applied = system.apply(&solution.stacked());
    let norm_b = system.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_r = applied.iter().zip(&system.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    solution.relative_residual = if norm_b > 0.0 { norm_r / norm_b } else { norm_r };
    Ok(solution)
}

/// Assembles the system for sample `y` on `level` without any caching.
pub fn assemble_system(y: &SampleVector, spec: &PerturbationSpec, level: usize) -> Result<BlockSystem> {
    LevelSolver::new(level, QuadratureOrders::default())?.assemble_sample(y, spec)
}

/// `u_h = I N_f + ũ_h` for sample `y` on `level` without any caching.
pub fn solve_sample(y: &SampleVector, spec: &PerturbationSpec, level: usize) -> Result<FeFunction> {
    LevelSolver::new(level, QuadratureOrders::default())?.solve_sample(y, spec)
}
