//! Acceptance gate. Every criterion prints one `PASS`/`FAIL` line; run with
//! `cargo test --test acceptance -- --nocapture` to see them.

use std::time::Instant;

use isovf_core::chain;
use isovf_core::flow;
use isovf_core::iso;
use isovf_core::lie::{AlgebraVector, GroupSpec, Splitting};
use isovf_core::poly::PolyMap;
use isovf_core::rep::{self, EquivariantMap, Representation, Sampler, VectorField};
use isovf_core::slice::{self, Slice, Tilt};
use isovf_core::spectra;
use isovf_core::Error;
use nalgebra::{DMatrix, DVector};

const GAUGE_TOL: f64 = 1e-5;
const GAUGE_STEP: f64 = 1e-3;
const GAUGE_MIN_RATIO: f64 = 12.0;
const GAUGE_BUDGET_S: f64 = 30.0;
const SHIFT_TOL: f64 = 1e-6;
const SHIFT_LINEAR_TOL: f64 = 1e-10;
const SPECTRA_TOL: f64 = 1e-5;
const MIN_IMAG_SHIFT: f64 = 1e-2;
const NU_MEMBERSHIP_TOL: f64 = 1e-8;
const NU_IDENTITY_TOL: f64 = 1e-7;
const SLICE_SAMPLES: usize = 20;
const ORBIT_TOL: f64 = 1e-6;
const ORBIT_CONTROL_MIN: f64 = 1e-1;
const RECOVERY_TOL: f64 = 1e-8;
const RECOVERY_EQUIVARIANCE_TOL: f64 = 1e-6;
const CHAIN_TOL: f64 = 1e-12;
const CHAIN_BUDGET_S: f64 = 60.0;

fn report(id: u32, what: &str, ok: bool, detail: String) -> bool {
    println!("criterion {id} {} {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn rep_of(group: &str, spec: &str) -> std::sync::Arc<Representation> {
    Representation::parse(GroupSpec::by_name(group).unwrap(), spec).unwrap()
}

fn lin(rep: &std::sync::Arc<Representation>, rows: &[f64]) -> VectorField {
    let n = rep.dim;
    VectorField::linear(rep, DMatrix::from_row_slice(n, n, rows)).unwrap()
}

fn constant(rep: &std::sync::Arc<Representation>, c: &[f64]) -> EquivariantMap {
    EquivariantMap::constant(rep, AlgebraVector::from_slice(c)).unwrap()
}

fn e(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn near_e1e2(seed: u64, count: usize, radius: f64) -> Vec<DVector<f64>> {
    let mut s = Sampler::new(seed);
    (0..count)
        .map(|_| s.point_in_ball(6, radius) + e(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]))
        .collect()
}

fn kepler_pair() -> (VectorField, VectorField, EquivariantMap) {
    let rep = rep_of("O3", "diagonal:2");
    let x = VectorField::central_force(&rep, 1.0, 3.0, 1.0).unwrap();
    let psi = EquivariantMap::angular_momentum(&rep).unwrap();
    let y = x.sub(&rep::induced_field_from_map(&psi)).unwrap();
    (x, y, psi)
}

// (1 − |z|²)z + Jz on the first plane, (a + bJ)z on the second
fn torus_field(rep: &std::sync::Arc<Representation>, a: f64, b: f64) -> VectorField {
    let t = |o, c, e: [u32; 4]| (o, c, e.to_vec());
    let terms = vec![
        t(0, 1.0, [1, 0, 0, 0]),
        t(0, -1.0, [0, 1, 0, 0]),
        t(0, -1.0, [3, 0, 0, 0]),
        t(0, -1.0, [1, 2, 0, 0]),
        t(1, 1.0, [1, 0, 0, 0]),
        t(1, 1.0, [0, 1, 0, 0]),
        t(1, -1.0, [2, 1, 0, 0]),
        t(1, -1.0, [0, 3, 0, 0]),
        t(2, a, [0, 0, 1, 0]),
        t(2, -b, [0, 0, 0, 1]),
        t(3, b, [0, 0, 1, 0]),
        t(3, a, [0, 0, 0, 1]),
    ];
    VectorField::polynomial(rep, PolyMap::from_terms(4, 4, &terms).unwrap()).unwrap()
}

#[test]
fn criterion_1_gauge_identity() {
    let start = Instant::now();
    let so2 = rep_of("SO2", "standard");
    let x = lin(&so2, &[1.0, -1.0, 1.0, 1.0]);
    let y = lin(&so2, &[1.0, 0.0, 0.0, 1.0]);
    let one = constant(&so2, &[1.0]);
    let pts = Sampler::new(1).points(2, 10, 1.0);
    let (kx, ky, kpsi) = kepler_pair();
    let kpts = near_e1e2(2, 10, 0.2);

    let mut ok = true;
    let mut details = Vec::new();
    for (name, x, y, psi, pts) in [("so2_minimal", &x, &y, &one, &pts), ("central_force_o3", &kx, &ky, &kpsi, &kpts)] {
        let coarse = flow::verify_gauge_identity(x, y, psi, pts, 1.0, GAUGE_STEP).unwrap();
        let fine = flow::verify_gauge_identity(x, y, psi, pts, 1.0, 0.5 * GAUGE_STEP).unwrap();
        let ratio = coarse.sup_error / fine.sup_error;
        ok &= coarse.sup_error <= GAUGE_TOL && ratio >= GAUGE_MIN_RATIO;
        details.push(format!("{name} e(h)={:.2e} ratio={ratio:.1}", coarse.sup_error));
    }

    // oracle: Φ^X_t(m) = e^t R(t) m, F_t = R(t), Φ^Y_t(m) = e^t m
    let traj = flow::integrate_flow(&x, &pts[0], 1.0, GAUGE_STEP).unwrap();
    let (s, c) = 1f64.sin_cos();
    let exact = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]) * &pts[0] * 1f64.exp();
    let closed_form = (traj.points.last().unwrap() - exact).norm();
    ok &= closed_form < 1e-10;

    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= GAUGE_BUDGET_S;
    details.push(format!("closed form {closed_form:.1e}, {secs:.1}s"));
    assert!(report(1, "gauge identity", ok, details.join("; ")));
}

#[test]
fn criterion_2_linearization_shift() {
    let so2 = rep_of("SO2", "standard");
    let (a, b, c) = (0.5, 1.0, 0.25);
    let y = lin(&so2, &[a, -b, b, a]);
    let psi = constant(&so2, &[c]);
    let x = y.add(&rep::induced_field_from_map(&psi)).unwrap();
    let linear = spectra::shift_check(&x, &y, &psi).unwrap();
    // oracle: DX(0) = aI + (b + c)J
    let expected = DMatrix::from_row_slice(2, 2, &[a, -(b + c), b + c, a]);
    let oracle = (&linear.dx - expected).norm();

    let cubic_terms = |o: usize, lin0: f64, lin1: f64| {
        let mut t = vec![(o, lin0, vec![1, 0]), (o, lin1, vec![0, 1])];
        let cubic = if o == 0 { [3u32, 0, 1, 2] } else { [2, 1, 0, 3] };
        t.push((o, -1.0, vec![cubic[0], cubic[1]]));
        t.push((o, -1.0, vec![cubic[2], cubic[3]]));
        t
    };
    let mut terms = cubic_terms(0, a, -b);
    terms.extend(cubic_terms(1, b, a));
    let cy = VectorField::polynomial(&so2, PolyMap::from_terms(2, 2, &terms).unwrap()).unwrap();
    let cpsi = EquivariantMap::polynomial(
        &so2,
        PolyMap::from_terms(2, 1, &[(0, c, vec![0, 0]), (0, 1.0, vec![2, 0]), (0, 1.0, vec![0, 2])]).unwrap(),
    )
    .unwrap();
    let cx = cy.add(&rep::induced_field_from_map(&cpsi)).unwrap();
    let cubic = spectra::shift_check(&cx, &cy, &cpsi).unwrap();
    let cubic_oracle = (&cubic.dx - DMatrix::from_row_slice(2, 2, &[a, -(b + c), b + c, a])).norm();

    let ok = linear.residual <= SHIFT_LINEAR_TOL
        && oracle <= SHIFT_LINEAR_TOL
        && cubic.residual <= SHIFT_TOL
        && cubic_oracle <= SHIFT_TOL;
    assert!(report(
        2,
        "linearization shift",
        ok,
        format!(
            "linear {:.1e} (oracle {oracle:.1e}), cubic {:.1e} (oracle {cubic_oracle:.1e})",
            linear.residual, cubic.residual
        )
    ));
}

#[test]
fn criterion_3_slice_independence() {
    let o3 = rep_of("O3", "diagonal:2");
    let harmonic = VectorField::central_force(&o3, 1.0, 0.0, 1.0).unwrap();
    let x = e(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    let base = Slice::build(&o3, &x, 0.5).unwrap();
    let split = base.splitting().unwrap();
    let s1 = base.tilted(&Tilt::Random { amplitude: 0.3, seed: 5 }).unwrap();
    let s2 = base.tilted(&Tilt::Random { amplitude: 0.3, seed: 6 }).unwrap();
    let h = spectra::compare_slice_spectra(&harmonic, &s1, &split, &s2, &split).unwrap();
    // oracle: the radius of a planar isotropic oscillation breathes at twice the orbital
    // frequency, and the circular orbits form a one-parameter family, so the spectrum is {0, ±2i}
    let normal = spectra::linearize_slice_field(&harmonic, &base, &split).unwrap();
    let mut im: Vec<f64> = normal.eigenvalues.iter().map(|l| l.im).collect();
    im.sort_by(f64::total_cmp);
    let breathing = normal.eigenvalues.iter().all(|l| l.re.abs() < 1e-6)
        && im.len() == 3
        && (im[0] + 2.0).abs() < 1e-6
        && im[1].abs() < 1e-6
        && (im[2] - 2.0).abs() < 1e-6;
    let free = h.fixed_subalgebra.is_empty() && h.max_eigenvalue_discrepancy <= SPECTRA_TOL && breathing;

    let t2 = rep_of("T2", "standard");
    let f = torus_field(&t2, -0.3, 0.7);
    let y = e(&[1.0, 0.0, 0.0, 0.0]);
    let base = Slice::build(&t2, &y, 0.5).unwrap();
    let split1 = base.splitting().unwrap();
    let m2 = vec![AlgebraVector::from_slice(&[1.0, 0.5])];
    let split2 = Splitting::with_complement(&t2.group, split1.h_basis.clone(), m2, &base.stabilizer_generators()).unwrap();
    let tilted = base.tilted(&Tilt::Random { amplitude: 0.3, seed: 3 }).unwrap();
    let t = spectra::compare_slice_spectra(&f, &base, &split1, &tilted, &split2).unwrap();
    let shifted = t.membership_residual <= SPECTRA_TOL
        && t.max_real_discrepancy <= SPECTRA_TOL
        && t.max_imag_discrepancy >= MIN_IMAG_SHIFT
        && !t.fixed_subalgebra.is_empty();
    // oracle: the m-component 0.5 of the orbit velocity rotates the second plane by −0.5
    let oracle = (t.max_imag_discrepancy - 0.5).abs() < 1e-6;

    assert!(report(
        3,
        "slice independence",
        free && shifted && oracle,
        format!(
            "harmonic full {:.1e}; torus membership {:.1e}, real {:.1e}, imag shift {:.3}",
            h.max_eigenvalue_discrepancy, t.membership_residual, t.max_real_discrepancy, t.max_imag_discrepancy
        )
    ));
}

#[test]
fn criterion_4_slice_change_witness() {
    let mut worst_m: f64 = 0.0;
    let mut worst_i: f64 = 0.0;
    let mut count = 0;
    let (kepler, _, _) = kepler_pair();
    let o3 = kepler.rep.clone();
    let t2 = rep_of("T2", "standard");
    let torus = torus_field(&t2, -0.3, 0.7);
    let cases = [
        (&kepler, &o3, e(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 7),
        (&kepler, &o3, e(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]), 9),
        (&torus, &t2, e(&[1.0, 0.0, 0.0, 0.0]), 4),
    ];
    for (field, rep, x, seed) in cases {
        let s1 = Slice::build(rep, &x, 0.3).unwrap();
        let s2 = s1.tilted(&Tilt::Random { amplitude: 0.3, seed }).unwrap();
        let split = s1.splitting().unwrap();
        let pts = s1.sample_points(SLICE_SAMPLES, 0.5, seed);
        let w = slice::slice_change_witness(field, &s1, &s2, &split, &pts).unwrap();
        count += w.samples.len();
        worst_m = worst_m.max(w.membership_residual);
        worst_i = worst_i.max(w.identity_residual);
    }
    let ok = worst_m <= NU_MEMBERSHIP_TOL && worst_i <= NU_IDENTITY_TOL && count == 3 * SLICE_SAMPLES;
    assert!(report(
        4,
        "slice-change witness",
        ok,
        format!("{count} samples, membership {worst_m:.1e}, identity {worst_i:.1e}")
    ));
}

#[test]
fn criterion_5_orbit_flow() {
    let so2 = rep_of("SO2", "standard");
    let x = lin(&so2, &[1.0, -1.0, 1.0, 1.0]);
    let y = lin(&so2, &[1.0, 0.0, 0.0, 1.0]);
    let control = lin(&so2, &[-1.0, 0.0, 0.0, -1.0]);
    let pts: Vec<_> = Sampler::new(3).points(2, 20, 1.0).into_iter().filter(|p| p.norm() > 0.3).collect();
    let opts = flow::FlowOptions::default();
    let inv = so2.invariant_functions();
    let d = iso::orbit_flow_check(&x, &y, &inv, &pts, 1.0, GAUGE_STEP, &opts).unwrap();
    let dc = iso::orbit_flow_check(&x, &control, &inv, &pts, 1.0, GAUGE_STEP, &opts).unwrap();

    let (kx, ky, _) = kepler_pair();
    let strong = VectorField::central_force(&kx.rep, 2.0, 3.0, 1.0).unwrap();
    let kpts = near_e1e2(4, 10, 0.2);
    let kinv = kx.rep.invariant_functions();
    let kd = iso::orbit_flow_check(&kx, &ky, &kinv, &kpts, 1.0, GAUGE_STEP, &opts).unwrap();
    let kdc = iso::orbit_flow_check(&kx, &strong, &kinv, &kpts, 1.0, GAUGE_STEP, &opts).unwrap();

    let ok = d <= ORBIT_TOL && kd <= ORBIT_TOL && dc > ORBIT_CONTROL_MIN && kdc > ORBIT_CONTROL_MIN;
    assert!(report(
        5,
        "orbit flow",
        ok,
        format!("pairs {d:.1e} / {kd:.1e}, controls {dc:.2} / {kdc:.2}")
    ));
}

#[test]
fn criterion_6_witness_recovery() {
    let so2 = rep_of("SO2", "standard");
    let x = lin(&so2, &[1.0, -1.0, 1.0, 1.0]);
    let y = lin(&so2, &[1.0, 0.0, 0.0, 1.0]);
    let mut s = Sampler::new(6);
    let pts: Vec<_> = s.points(2, 30, 1.5).into_iter().filter(|p| p.norm() > 0.2).collect();
    let gs = s.group_elements(&so2.group, 6);
    let mut table = pts.clone();
    for g in &gs {
        table.extend(pts.iter().map(|p| so2.act(g, p)));
    }
    let rec = iso::recover_witness(&x, &y, &table).unwrap();
    let eq = rep::check_equivariance(&rec.psi, &gs, &pts).unwrap();
    // oracle: the recovered witness is ψ ≡ 1
    let oracle = pts.iter().map(|p| (rec.psi.eval(p).unwrap().coords[0] - 1.0).abs()).fold(0.0, f64::max);
    let singular = matches!(iso::recover_witness(&x, &y, &[e(&[0.0, 0.0])]), Err(Error::SingularPoint { .. }));
    let ok = rec.residual <= RECOVERY_TOL && eq <= RECOVERY_EQUIVARIANCE_TOL && oracle <= RECOVERY_TOL && singular;
    assert!(report(
        6,
        "witness recovery",
        ok,
        format!(
            "residual {:.1e}, equivariance {eq:.1e}, |ψ − 1| {oracle:.1e}, singular point refused: {singular}",
            rec.residual
        )
    ));
}

#[test]
fn criterion_7_chain_homotopy() {
    let start = Instant::now();
    let cases = [
        ("SO2 tube", rep_of("SO2", "standard"), e(&[1.0, 0.0])),
        ("Z/2 line", rep_of("Zn:2", "standard"), e(&[0.0])),
        ("O3 at (e1,0)", rep_of("O3", "diagonal:2"), e(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
    ];
    let mut ok = true;
    let mut details = Vec::new();
    for (name, rep, x) in cases {
        let s = Slice::build(&rep, &x, 1.0).unwrap();
        let split = s.splitting().unwrap();
        let reports = chain::chain_sweep(&s, &split, &[0, 1, 2, 3]).unwrap();
        let mut worst: f64 = 0.0;
        for r in &reports {
            worst = worst
                .max(r.chain_map_residual)
                .max(r.p1k1_residual)
                .max(r.p0k0_residual)
                .max(r.homotopy1_residual)
                .max(r.homotopy0_residual);
            ok &= r.pass && r.surjective && r.injective && r.coker_slice == r.coker_tube;
        }
        ok &= worst <= CHAIN_TOL && reports.len() == 4;
        details.push(format!("{name} {worst:.1e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= CHAIN_BUDGET_S;
    details.push(format!("{secs:.1}s"));
    assert!(report(7, "chain homotopy equivalence", ok, details.join("; ")));
}

#[test]
fn criterion_8_census() {
    let o3 = rep_of("O3", "diagonal:2");
    let points = [
        e(&[0.0; 6]),
        e(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        e(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
    ];
    let mut dims = Vec::new();
    let mut fixed = Vec::new();
    let mut componentwise = Vec::new();
    for x in &points {
        let s = Slice::build(&o3, x, 1.0).unwrap();
        dims.push(s.stab_algebra.len());
        fixed.push(spectra::fixed_subalgebra(&o3.group, &s.stab_algebra, &s.stab_component_gens).unwrap().basis.len());
        // oracle: every coset representative actually fixes the point
        componentwise.push(s.stab_component_gens.iter().all(|g| (o3.act(g, x) - x).norm() < 1e-9));
    }
    // O(2) at (e1,0) and {±1} at (e1,e2) have two components each
    let o2 = Slice::build(&o3, &points[1], 1.0).unwrap().stab_component_gens.len() == 2;
    let z2 = Slice::build(&o3, &points[2], 1.0).unwrap().stab_component_gens.len() == 2;
    let ok = dims == [3, 1, 0] && fixed[1..] == [0, 0] && componentwise.iter().all(|b| *b) && o2 && z2;
    assert!(report(
        8,
        "orbit census",
        ok,
        format!("dims {dims:?}, fixed {fixed:?}, H(e1,0) two components: {o2}, H(e1,e2) = {{±1}}: {z2}")
    ));
}
