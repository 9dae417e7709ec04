use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::spec::SynthSpec;
use crate::correspond::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, solve_forward, BcSpec, CgOptions, Material, Preconditioner};
use crate::geom::{geodesic_distance, KdTree, Point3, PointCloud, SurfaceMesh, TetMesh, Vec3};

/// CG tolerance for ground-truth solves.
pub const GENERATOR_CG_TOL: f64 = 1e-12;
/// Minimum nodes in the fixed patch, enough to suppress rigid motion.
pub const MIN_FIXED_NODES: usize = 3;
const VISIBILITY_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedForce {
    pub seed_vertex: usize,
    pub radius: f64,
    /// Total force in solver units (kPa·mm²).
    pub total: [f64; 3],
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedBc {
    pub fixed_seed: usize,
    pub fixed_radius: f64,
    pub fixed_nodes: Vec<usize>,
    pub forces: Vec<AppliedForce>,
}

impl AppliedBc {
    pub fn to_bc_spec(&self) -> BcSpec {
        let mut bc = BcSpec::new();
        for &n in &self.fixed_nodes {
            bc.fix(n, Vec3::zeros());
        }
        for f in &self.forces {
            let per = Vec3::from(f.total) / f.nodes.len() as f64;
            for &n in &f.nodes {
                bc.load(n, per);
            }
        }
        bc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub mesh: TetMesh,
    pub spec: SynthSpec,
    pub seed: u64,
    pub young_modulus: f64,
    /// Ground-truth volumetric displacement, `3 n_v` mm.
    pub u_gt: Vec<f64>,
    pub cloud: PointCloud,
    /// Boundary vertex observed by each cloud point.
    pub source_vertex: Vec<usize>,
    pub bc: AppliedBc,
    pub visibility: f64,
    pub view_direction: [f64; 3],
}

impl SynthCase {
    pub fn material(&self) -> Material {
        Material::new(self.young_modulus, self.spec.poisson).expect("validated at generation")
    }

    /// Ground-truth correspondences `(source vertex, cloud index)`.
    pub fn correspondences(&self) -> CorrespondenceSet {
        CorrespondenceSet::new(
            self.mesh.boundary_count,
            self.cloud.len(),
            self.source_vertex.iter().enumerate().map(|(j, &i)| (i, j)).collect(),
        )
        .expect("source vertices are distinct")
    }

    pub fn deformed_nodes(&self) -> Vec<Point3> {
        self.mesh.displaced_nodes(&self.u_gt).expect("field matches mesh")
    }

    /// Sorted boundary vertices observed in the cloud.
    pub fn observed_vertices(&self) -> Vec<usize> {
        let mut v = self.source_vertex.clone();
        v.sort_unstable();
        v
    }
}

/// Forward solve used both for generation and for consistency checks.
pub fn solve_ground_truth(mesh: &TetMesh, material: &Material, bc: &AppliedBc) -> Result<Vec<f64>> {
    let k = assemble_stiffness(mesh, material)?;
    let opts = CgOptions {
        tol: GENERATOR_CG_TOL,
        max_iter: 30 * k.dim(),
        preconditioner: Preconditioner::Jacobi,
    };
    solve_forward(&k, &bc.to_bc_spec(), &opts)?.into_converged()
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn in_unit_ball(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if v.norm_squared() <= 1.0 {
            return v;
        }
    }
}

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = in_unit_ball(rng);
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Vertices ordered by geodesic distance from `seed` (ties by index).
fn by_distance(surface: &SurfaceMesh, seed: usize) -> Result<Vec<(f64, usize)>> {
    let d = geodesic_distance(surface, &[seed])?.distances;
    let mut order: Vec<(f64, usize)> = d.into_iter().enumerate().map(|(i, d)| (d, i)).collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order)
}

/// Largest displacement norm over the first `boundary_count` nodes.
pub fn max_surface_displacement(u: &[f64], boundary_count: usize) -> f64 {
    u.chunks_exact(3)
        .take(boundary_count)
        .map(|d| (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
        .fold(0.0, f64::max)
}

pub fn generate_case(mesh: &TetMesh, spec: &SynthSpec, seed: u64) -> Result<SynthCase> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.boundary_count;
    let surface = mesh.surface();
    let young_modulus = uniform(&mut rng, spec.young_range);
    let material = Material::new(young_modulus, spec.poisson)?;

    let count = rng.random_range(spec.force_count.0..=spec.force_count.1).min(n);
    let force_seeds = sample(&mut rng, n, count).into_vec();

    // Fixed patch: centred on a vertex in the quarter of the surface farthest
    // from the loads.
    let far = if force_seeds.is_empty() {
        (0..n).map(|i| (0.0, i)).collect::<Vec<_>>()
    } else {
        let d = geodesic_distance(&surface, &force_seeds)?.distances;
        let mut v: Vec<(f64, usize)> = d.into_iter().enumerate().map(|(i, d)| (d, i)).collect();
        v.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        v
    };
    let fixed_seed = far[rng.random_range(0..(n / 4).max(1))].1;
    let fixed_radius = uniform(&mut rng, spec.fixed_bc_radius);
    let order = by_distance(&surface, fixed_seed)?;
    let mut fixed_nodes: Vec<usize> = order
        .iter()
        .enumerate()
        .take_while(|(k, (d, _))| *d <= fixed_radius || *k < MIN_FIXED_NODES)
        .map(|(_, &(_, i))| i)
        .collect();
    fixed_nodes.sort_unstable();

    let mut forces = Vec::with_capacity(count);
    for &fs in &force_seeds {
        let radius = uniform(&mut rng, spec.force_radius);
        let magnitude = spec.newtons_to_solver(rng.random_range(0.5..=1.0) * spec.max_force);
        let direction = unit_vector(&mut rng);
        let nodes: Vec<usize> = by_distance(&surface, fs)?
            .into_iter()
            .take_while(|(d, _)| *d <= radius)
            .map(|(_, i)| i)
            .filter(|i| fixed_nodes.binary_search(i).is_err())
            .collect();
        if nodes.is_empty() {
            return Err(Error::Degenerate(format!(
                "force patch at vertex {fs} lies entirely inside the fixed patch"
            )));
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        forces.push(AppliedForce {
            seed_vertex: fs,
            radius,
            total: (direction * magnitude).into(),
            nodes,
        });
    }
    let mut bc = AppliedBc {
        fixed_seed,
        fixed_radius,
        fixed_nodes,
        forces,
    };
    let mut u_gt = solve_ground_truth(mesh, &material, &bc)?;
    if let Some((lo, hi)) = spec.displacement_band {
        let peak = max_surface_displacement(&u_gt, n);
        if peak > 0.0 && !(lo..=hi).contains(&peak) {
            let s = peak.clamp(lo, hi) / peak;
            for f in &mut bc.forces {
                f.total = f.total.map(|c| c * s);
            }
            u_gt = solve_ground_truth(mesh, &material, &bc)?;
        }
    }

    // Visible patch on the deformed surface.
    let deformed = mesh.displaced_nodes(&u_gt)?;
    let mut dsurf = surface.clone();
    dsurf.vertices = deformed[..n].to_vec();
    let normals = dsurf.compute_normals();
    let target = uniform(&mut rng, spec.visibility);
    let want = ((target * n as f64).round() as usize).clamp(1, n);
    let mut chosen = None;
    for _ in 0..VISIBILITY_ATTEMPTS {
        let d = unit_vector(&mut rng);
        let facing: Vec<usize> = (0..n).filter(|&i| normals[i].dot(&d) > 0.0).collect();
        if facing.len() < want {
            continue;
        }
        let centre = facing[rng.random_range(0..facing.len())];
        let mut visible: Vec<usize> = by_distance(&dsurf, centre)?
            .into_iter()
            .map(|(_, i)| i)
            .filter(|&i| normals[i].dot(&d) > 0.0)
            .take(want)
            .collect();
        visible.sort_unstable();
        chosen = Some((visible, d));
        break;
    }
    let (source_vertex, view) = chosen.ok_or_else(|| Error::Degenerate(format!("no view direction exposes {want} of {n} vertices")))?;
    let points = source_vertex
        .iter()
        .map(|&i| deformed[i] + in_unit_ball(&mut rng) * spec.max_perturbation)
        .collect();

    Ok(SynthCase {
        mesh: mesh.clone(),
        spec: spec.clone(),
        seed,
        young_modulus,
        u_gt,
        cloud: PointCloud::new(points)?,
        visibility: source_vertex.len() as f64 / n as f64,
        source_vertex,
        bc,
        view_direction: view.into(),
    })
}

/// A case whose correspondences have slipped inside one surface patch.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedPatch {
    pub corr: CorrespondenceSet,
    /// Patch vertices ordered by geodesic distance from the patch centre.
    pub patch: Vec<usize>,
    /// True cloud index of each patch vertex.
    pub true_cloud: Vec<usize>,
    /// Unit slip direction, tangent to the surface at the patch centre.
    pub direction: [f64; 3],
}

/// Takes the `size` observed vertices geodesically closest to a random
/// observed vertex and re-pairs each with the observation of the observed
/// vertex nearest to its position shifted by `slip` mm along a random
/// tangent direction. Rows outside the patch whose target is taken lose
/// their pair. The slip gives the patch a coherent wrong pull, unlike a
/// permutation inside the patch whose pulls cancel.
pub fn corrupt_patch(case: &SynthCase, size: usize, slip: f64, seed: u64) -> Result<CorruptedPatch> {
    let observed = case.observed_vertices();
    if size < 2 || size > observed.len() {
        return Err(Error::InvalidInput(format!("patch size {size} not in [2, {}]", observed.len())));
    }
    if !(slip > 0.0 && slip.is_finite()) {
        return Err(Error::InvalidInput(format!("slip must be positive, got {slip}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centre = observed[rng.random_range(0..observed.len())];
    let surface = case.mesh.surface();
    let normal = surface.compute_normals()[centre];
    let direction = loop {
        let r = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let t = r - normal * normal.dot(&r);
        if t.norm() > 0.1 {
            break t.normalize();
        }
    };
    let gt = case.correspondences();
    let patch: Vec<usize> = by_distance(&surface, centre)?
        .into_iter()
        .map(|(_, i)| i)
        .filter(|i| observed.binary_search(i).is_ok())
        .take(size)
        .collect();
    let true_cloud: Vec<usize> = patch.iter().map(|&i| gt.target_of(i).expect("observed")).collect();
    let rest: Vec<Point3> = observed.iter().map(|&i| case.mesh.nodes[i]).collect();
    let tree = KdTree::new(&rest);
    let mut taken = std::collections::HashSet::new();
    let slipped: Vec<(usize, usize)> = patch
        .iter()
        .filter_map(|&i| {
            let (k, _) = tree.nearest(&(case.mesh.nodes[i] + direction * slip))?;
            let v = observed[k];
            (v != i && taken.insert(v)).then(|| (i, gt.target_of(v).expect("observed")))
        })
        .collect();
    let corr = gt.override_rows(&patch, &slipped)?;
    Ok(CorruptedPatch {
        corr,
        patch,
        true_cloud,
        direction: direction.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::make_beam_mesh;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            beam_cells: (4, 2, 2),
            beam_spacing: 10.0,
            force_radius: (5.0, 25.0),
            fixed_bc_radius: (10.0, 20.0),
            displacement_band: None,
            ..SynthSpec::preset("liver").unwrap()
        }
    }

    #[test]
    fn deterministic_and_consistent() {
        let spec = small_spec();
        let mesh = spec.mesh().unwrap();
        let a = generate_case(&mesh, &spec, 3).unwrap();
        let b = generate_case(&mesh, &spec, 3).unwrap();
        assert_eq!(a, b);
        let again = solve_ground_truth(&a.mesh, &a.material(), &a.bc).unwrap();
        let err = a.u_gt.iter().zip(&again).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(err <= 1e-8);
        assert!(a.u_gt.iter().any(|&v| v != 0.0));
        assert!(a.bc.fixed_nodes.len() >= MIN_FIXED_NODES);
        let (lo, hi) = spec.visibility;
        assert!(a.visibility >= lo - 0.05 && a.visibility <= hi + 0.05, "{}", a.visibility);
        let def = a.deformed_nodes();
        for (p, &i) in a.cloud.points.iter().zip(&a.source_vertex) {
            assert!((p - def[i]).norm() <= spec.max_perturbation);
        }
    }

    #[test]
    fn zero_force_gives_zero_field() {
        let spec = SynthSpec {
            max_force: 0.0,
            max_perturbation: 0.0,
            ..small_spec()
        };
        let mesh = make_beam_mesh(4, 2, 2, 10.0).unwrap();
        let c = generate_case(&mesh, &spec, 1).unwrap();
        assert!(c.u_gt.iter().all(|&v| v == 0.0));
        for (p, &i) in c.cloud.points.iter().zip(&c.source_vertex) {
            assert_eq!(*p, mesh.nodes[i]);
        }
    }

    #[test]
    fn displacement_linear_in_force() {
        let spec = small_spec();
        let mesh = spec.mesh().unwrap();
        let full = generate_case(&mesh, &spec, 8).unwrap();
        let half = generate_case(
            &mesh,
            &SynthSpec {
                max_force: spec.max_force / 2.0,
                ..spec.clone()
            },
            8,
        )
        .unwrap();
        let scale = full.u_gt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in full.u_gt.iter().zip(&half.u_gt) {
            assert!((a - 2.0 * b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn band_rescales_forces() {
        let spec = SynthSpec {
            displacement_band: Some((5.0, 6.0)),
            ..small_spec()
        };
        let mesh = spec.mesh().unwrap();
        for seed in 0..4 {
            let c = generate_case(&mesh, &spec, seed).unwrap();
            let peak = max_surface_displacement(&c.u_gt, mesh.boundary_count);
            assert!((5.0 - 1e-9..=6.0 + 1e-9).contains(&peak), "{peak}");
            let again = solve_ground_truth(&c.mesh, &c.material(), &c.bc).unwrap();
            assert!(c.u_gt.iter().zip(&again).all(|(a, b)| (a - b).abs() <= 1e-8));
        }
    }

    #[test]
    fn corrupted_patch_slips_only_the_patch() {
        let spec = small_spec();
        let case = generate_case(&spec.mesh().unwrap(), &spec, 2).unwrap();
        let c = corrupt_patch(&case, 5, 15.0, 0).unwrap();
        let gt = case.correspondences();
        for &(i, j) in c.corr.pairs() {
            if c.patch.contains(&i) {
                assert_ne!(gt.target_of(i), Some(j));
            } else {
                assert_eq!(gt.target_of(i), Some(j));
            }
        }
        let d = Vec3::from(c.direction);
        assert!((d.norm() - 1.0).abs() < 1e-12);
        assert!(corrupt_patch(&case, 5, 0.0, 0).is_err());
    }
}
