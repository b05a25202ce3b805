//! Mollified resonance kernel and the bundle-resolved diffusion operator.

use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bundles::TrajectoryBundle;
use crate::error::{Error, Result};
use crate::hamiltonian::{DispersionModel, WaveVector};
use crate::ldg::{MomentumGeometry, PGrid};
use crate::mesh::{RectGrid, TriMesh};
use crate::polygon::{self, Tagged};
use crate::scalar::Scalar;

/// Coupling amplitude `U_l(p, k, r) >= 0`.
pub trait Amplitude<T: Scalar>: Send + Sync + Debug {
    fn value(&self, p_par: T, p_perp: T, k: WaveVector<T>, r: T) -> T;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UnitAmplitude;

impl<T: Scalar> Amplitude<T> for UnitAmplitude {
    fn value(&self, _: T, _: T, _: WaveVector<T>, _: T) -> T {
        T::one()
    }
}

const RANDOM_MODES: usize = 4;

/// Smooth positive amplitude `exp(sum_n a_n cos(w_n . x + phase_n))` over the
/// scaled coordinates `x = (p_par/25, p_perp/15, k_r, k_phi, k_z, r)`, with
/// coefficients drawn from a seeded generator.
#[derive(Debug, Clone)]
pub struct RandomAmplitude {
    modes: Vec<([f64; 6], f64, f64)>,
}

impl RandomAmplitude {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (0..RANDOM_MODES)
            .map(|_| {
                let mut w = [0.0; 6];
                for x in &mut w {
                    *x = rng.gen_range(-3.0..3.0);
                }
                (
                    w,
                    rng.gen_range(-0.25..0.25),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        RandomAmplitude { modes }
    }
}

impl<T: Scalar> Amplitude<T> for RandomAmplitude {
    fn value(&self, p_par: T, p_perp: T, k: WaveVector<T>, r: T) -> T {
        let x = [
            p_par.to_f64_lossy() / 25.0,
            p_perp.to_f64_lossy() / 15.0,
            k.k_r.to_f64_lossy(),
            k.k_phi.to_f64_lossy(),
            k.k_z.to_f64_lossy(),
            r.to_f64_lossy(),
        ];
        let s: f64 = self
            .modes
            .iter()
            .map(|(w, a, ph)| a * (w.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + ph).cos())
            .sum();
        T::lit(s.exp())
    }
}

/// Harmonic number, mollifier width and coupling amplitude.
#[derive(Debug, Clone)]
pub struct KernelSpec<T> {
    pub harmonic: i32,
    pub epsilon: T,
    pub amplitude: Arc<dyn Amplitude<T>>,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn new(harmonic: i32, epsilon: T, amplitude: Arc<dyn Amplitude<T>>) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::config("physics.epsilon", "must be positive"));
        }
        Ok(KernelSpec {
            harmonic,
            epsilon,
            amplitude,
        })
    }
}

/// Normalised Gaussian of width `eps`.
pub fn gaussian<T: Scalar>(x: T, eps: T) -> T {
    let z = x / eps;
    (-(z * z) / T::lit(2.0)).exp() / (eps * (T::lit(2.0) * T::PI()).sqrt())
}

/// `omega^-2 U_l phi_eps(omega - k_z v_par - l omega_ce / gamma)`.
pub fn mollified_kernel<T: Scalar, M: DispersionModel<T> + ?Sized>(
    p_par: T,
    p_perp: T,
    k: WaveVector<T>,
    r: T,
    spec: &KernelSpec<T>,
    model: &M,
) -> T {
    let omega_ce = model.omega_ce(r);
    let omega = model.branch(k, model.omega_pe(r), omega_ce);
    let gamma = (T::one() + p_par * p_par + p_perp * p_perp).sqrt();
    let l = T::lit(f64::from(spec.harmonic));
    let mismatch = omega - k.k_z * p_par / gamma - l * omega_ce / gamma;
    spec.amplitude.value(p_par, p_perp, k, r) * gaussian(mismatch, spec.epsilon) / (omega * omega)
}

/// Sparse collection of `2x2` symmetric blocks `K beta beta^T`, stored as
/// `[d11, d12, d22]` per `(cell, bundle)` pair.
///
/// Cells are indexed `xi * n_p + c` over radial slices `xi` and momentum
/// cells `c`. Entries are sorted by cell, then bundle.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator<T> {
    n_slices: usize,
    n_p: usize,
    n_bundles: usize,
    cell_start: Vec<usize>,
    bundle: Vec<u32>,
    blocks: Vec<[T; 3]>,
    by_bundle_start: Vec<usize>,
    by_bundle: Vec<usize>,
}

impl<T: Scalar> DiffusionOperator<T> {
    /// Builds the operator from `(cell, bundle, block)` triples.
    pub fn from_entries(
        n_slices: usize,
        n_p: usize,
        n_bundles: usize,
        mut entries: Vec<(usize, u32, [T; 3])>,
    ) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let n_cells = n_slices * n_p;
        let mut cell_start = vec![0; n_cells + 1];
        for e in &entries {
            cell_start[e.0 + 1] += 1;
        }
        for c in 0..n_cells {
            cell_start[c + 1] += cell_start[c];
        }
        let mut counts = vec![0usize; n_bundles + 1];
        for e in &entries {
            counts[e.1 as usize + 1] += 1;
        }
        for b in 0..n_bundles {
            counts[b + 1] += counts[b];
        }
        let by_bundle_start = counts.clone();
        let mut by_bundle = vec![0; entries.len()];
        for (idx, e) in entries.iter().enumerate() {
            let b = e.1 as usize;
            by_bundle[counts[b]] = idx;
            counts[b] += 1;
        }
        DiffusionOperator {
            n_slices,
            n_p,
            n_bundles,
            cell_start,
            bundle: entries.iter().map(|e| e.1).collect(),
            blocks: entries.iter().map(|e| e.2).collect(),
            by_bundle_start,
            by_bundle,
        }
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn n_bundles(&self) -> usize {
        self.n_bundles
    }

    pub fn nnz(&self) -> usize {
        self.blocks.len()
    }

    pub fn memory_bytes(&self) -> usize {
        self.blocks.len() * (std::mem::size_of::<[T; 3]>() + 4 + std::mem::size_of::<usize>())
            + (self.cell_start.len() + self.by_bundle_start.len()) * std::mem::size_of::<usize>()
    }

    /// `(bundle, block)` entries of one cell.
    pub fn cell_entries(&self, cell: usize) -> impl Iterator<Item = (usize, [T; 3])> + '_ {
        let r = self.cell_start[cell]..self.cell_start[cell + 1];
        self.bundle[r.clone()]
            .iter()
            .zip(&self.blocks[r])
            .map(|(&b, &d)| (b as usize, d))
    }

    /// `(cell, block)` entries of one bundle, cells ascending.
    pub fn bundle_entries(&self, b: usize) -> impl Iterator<Item = (usize, [T; 3])> + '_ {
        self.by_bundle[self.by_bundle_start[b]..self.by_bundle_start[b + 1]]
            .iter()
            .map(move |&idx| (self.cell_of(idx), self.blocks[idx]))
    }

    fn cell_of(&self, idx: usize) -> usize {
        self.cell_start.partition_point(|&s| s <= idx) - 1
    }

    /// Largest Frobenius norm among the stored blocks.
    pub fn max_block_norm(&self) -> T {
        self.blocks
            .iter()
            .map(|d| frobenius(*d))
            .fold(T::zero(), T::max)
    }

    /// `D_eff(c) = sum_b coeff_b * block_{c,b}` for every cell.
    pub fn effective_field(&self, coeff: &[T]) -> Vec<[T; 3]> {
        (0..self.n_slices * self.n_p)
            .into_par_iter()
            .map(|c| {
                let mut d = [T::zero(); 3];
                for (b, blk) in self.cell_entries(c) {
                    let w = coeff[b];
                    d[0] += w * blk[0];
                    d[1] += w * blk[1];
                    d[2] += w * blk[2];
                }
                d
            })
            .collect()
    }

    /// `(1 / G_b) sum_c w_c (grad E)_c . block . (grad f)_c` for each bundle.
    pub fn reaction_rates(
        &self,
        grad_f: &[[T; 2]],
        grad_e: &[[T; 2]],
        weight: &[T],
        measure: &[T],
    ) -> Vec<T> {
        (0..self.n_bundles)
            .into_par_iter()
            .map(|b| {
                let terms: Vec<T> = self
                    .bundle_entries(b)
                    .map(|(c, d)| {
                        let p = c % self.n_p;
                        let (e, g) = (grad_e[p], grad_f[c]);
                        weight[p]
                            * (e[0] * (d[0] * g[0] + d[1] * g[1])
                                + e[1] * (d[1] * g[0] + d[2] * g[1]))
                    })
                    .collect();
                crate::scalar::pairwise_sum(&terms) / measure[b]
            })
            .collect()
    }
}

fn frobenius<T: Scalar>(d: [T; 3]) -> T {
    (d[0] * d[0] + T::lit(2.0) * d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Relative threshold below which blocks are dropped.
pub const BLOCK_DROP_RELATIVE: f64 = 1e-300;

/// Everything the assembly needs to know about the discretisation.
pub struct AssemblyInput<'a, T: Scalar, M: ?Sized> {
    pub mesh: &'a TriMesh<T>,
    pub bundles: &'a [TrajectoryBundle<T>],
    pub pgrid: &'a PGrid<T>,
    pub geometry: &'a MomentumGeometry<T>,
    pub r_slices: &'a RectGrid<T>,
    pub spec: &'a KernelSpec<T>,
    pub model: &'a M,
}

struct Piece<T> {
    slice: usize,
    weight: T,
    k: WaveVector<T>,
    r: T,
}

fn bundle_pieces<T: Scalar>(
    mesh: &TriMesh<T>,
    b: &TrajectoryBundle<T>,
    slices: &RectGrid<T>,
) -> Result<Vec<Piece<T>>> {
    let two_pi = T::lit(2.0) * T::PI();
    let (q_phi, k_z) = b.phz_center;
    let mut pieces = Vec::new();
    for (&t, &rm) in b.cover.iter().zip(&b.proportions) {
        if rm <= T::zero() {
            continue;
        }
        let c = mesh.corners(t);
        let tri: Vec<Tagged<T>> = c.iter().map(|&p| (p, p[1])).collect();
        let r_lo = c.iter().map(|p| p[1]).fold(T::infinity(), T::min);
        let r_hi = c.iter().map(|p| p[1]).fold(T::neg_infinity(), T::max);
        let first = slices.locate(r_lo);
        for xi in first..slices.len() {
            let (lo, hi) = (slices.edges()[xi], slices.edges()[xi + 1]);
            if lo >= r_hi {
                break;
            }
            let clipped = polygon::clip(&polygon::clip(&tri, lo, true), hi, false);
            let (area, centroid) = polygon::area_centroid(&clipped);
            if area <= T::zero() {
                continue;
            }
            let r = centroid[1];
            pieces.push(Piece {
                slice: xi,
                weight: rm * area * b.phz_area * two_pi * r,
                k: WaveVector::from_canonical(centroid[0], q_phi, k_z, r)?,
                r,
            });
        }
    }
    Ok(pieces)
}

/// Assembles `K_{b,xi,c} beta beta^T` for every retained bundle `b`, radial
/// slice `xi` and momentum cell `c`.
///
/// `K` integrates the mollified kernel over the bundle's part of each slice,
/// each cover triangle weighted by its band fraction and the cylindrical
/// factor `2 pi r`. The last `p_par` row carries no coupling: the
/// discrete `p_par` derivative vanishes there, and keeping it would break the
/// exact momentum balance.
pub fn assemble_diffusion<T: Scalar, M: DispersionModel<T> + ?Sized>(
    input: &AssemblyInput<'_, T, M>,
) -> Result<DiffusionOperator<T>> {
    let pgrid = input.pgrid;
    let n_p = pgrid.n_cells();
    let n_slices = input.r_slices.len();
    let last_row = pgrid.n_par() - 1;
    let per_bundle: Vec<Vec<(usize, u32, [T; 3])>> = input
        .bundles
        .par_iter()
        .enumerate()
        .map(|(bi, b)| -> Result<Vec<(usize, u32, [T; 3])>> {
            let pieces = bundle_pieces(input.mesh, b, input.r_slices)?;
            let k_z = b.phz_center.1;
            let mut out = Vec::new();
            let mut k_cell = vec![T::zero(); n_p];
            for xi in 0..n_slices {
                let slab: Vec<&Piece<T>> = pieces.iter().filter(|p| p.slice == xi).collect();
                if slab.is_empty() {
                    continue;
                }
                for (c, kc) in k_cell.iter_mut().enumerate() {
                    let (p_par, p_perp) = pgrid.center(c);
                    *kc = slab
                        .iter()
                        .map(|p| {
                            p.weight
                                * mollified_kernel(p_par, p_perp, p.k, p.r, input.spec, input.model)
                        })
                        .sum();
                }
                for (c, &kc) in k_cell.iter().enumerate() {
                    if kc == T::zero() || pgrid.cell(c).0 == last_row {
                        continue;
                    }
                    let beta = input.geometry.beta(c, k_z, b.omega_sup);
                    let blk = [
                        kc * beta[0] * beta[0],
                        kc * beta[0] * beta[1],
                        kc * beta[1] * beta[1],
                    ];
                    if !blk.iter().all(|x| x.is_finite()) {
                        return Err(Error::Numerical(format!(
                            "non-finite diffusion block for bundle {bi} at cell {c}"
                        )));
                    }
                    out.push((xi * n_p + c, bi as u32, blk));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let max = per_bundle
        .iter()
        .flatten()
        .map(|e| frobenius(e.2))
        .fold(T::zero(), T::max);
    let cut = max * T::lit(BLOCK_DROP_RELATIVE);
    let entries: Vec<_> = per_bundle
        .into_iter()
        .flatten()
        .filter(|e| {
            let f = frobenius(e.2);
            f > T::zero() && f >= cut
        })
        .collect();
    Ok(DiffusionOperator::from_entries(
        n_slices,
        n_p,
        input.bundles.len(),
        entries,
    ))
}
