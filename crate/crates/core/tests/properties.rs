use aomsim::chaostest::{k_correlation, mean_square_displacement, translation_components};
use aomsim::dynamics::{lindblad_rhs, observables, ObservableSeries, QuantumObservables};
use aomsim::operators::{build_operators, hamiltonian, hermiticity_residual, FockLabel};
use aomsim::sweep::{load_diagram, save_diagram, CellPhase, PhaseDiagram};
use aomsim::chaostest::Phase;
use aomsim::trajectories::{effective_hamiltonian, qt_step, trajectory_rng};
use aomsim::validation::random_density;
use aomsim::SystemParams;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small() -> SystemParams {
    SystemParams { n_m: 2, n_c: 3, ..SystemParams::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rhs_is_traceless_and_hermitian(seed in any::<u64>(), g_ac in -4.0..4.0f64, x in -3.2..3.2f64) {
        let p = SystemParams { g_ac, ..small() };
        let ops = build_operators(&p).unwrap();
        let rho = random_density(ops.dim, &mut ChaCha8Rng::seed_from_u64(seed));
        let d = lindblad_rhs(&rho, &hamiltonian(&ops, g_ac, x), &ops, &p);
        prop_assert!(d.trace().norm() < 1e-10);
        prop_assert!(hermiticity_residual(&d) < 1e-12);
    }

    #[test]
    fn observables_are_bounded(seed in any::<u64>()) {
        let p = small();
        let ops = build_operators(&p).unwrap();
        let rho = random_density(ops.dim, &mut ChaCha8Rng::seed_from_u64(seed));
        let q = observables(&rho, &ops);
        prop_assert!(q.n_m >= 0.0 && q.n_m <= (p.n_m - 1) as f64 + 1e-12);
        prop_assert!(q.n_c >= 0.0 && q.n_c <= (p.n_c - 1) as f64 + 1e-12);
        prop_assert!(q.n_a >= 0.0 && q.n_a <= 1.0 + 1e-12);
        // |⟨a†σ⁻⟩|² ≤ ⟨a†a⟩⟨σ⁺σ⁻⟩.
        prop_assert!(q.corr * q.corr <= q.n_c * q.n_a + 1e-12);
    }

    #[test]
    fn qt_step_preserves_norm(seed in any::<u64>(), g_ac in 0.0..4.0f64, x in -3.2..3.2f64, dt in 1e-4..5e-3f64) {
        let p = SystemParams { g_ac, ..small() };
        let ops = build_operators(&p).unwrap();
        let heff = effective_hamiltonian(&hamiltonian(&ops, g_ac, x), &ops, &p);
        let mut rng = trajectory_rng(seed, 3);
        let mut psi = ops.fock_ket(FockLabel::new(1, 2, 1)).unwrap();
        for _ in 0..20 {
            psi = qt_step(&psi, &heff, &ops, &p, dt, &mut rng).unwrap().0;
            let norm: f64 = psi.iter().map(Complex64::norm_sqr).sum();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn msd_is_non_negative(phi in prop::collection::vec(-5.0..5.0f64, 120..300), nu in 0.7..2.4f64) {
        let tc = translation_components(&phi, nu).unwrap();
        let m = mean_square_displacement(&tc.x_ac, &tc.p_ac, phi.len() / 10).unwrap();
        prop_assert!(m.iter().all(|&v| v >= 0.0));
        prop_assert_eq!(m[0], 0.0);
    }

    #[test]
    fn k_correlation_is_bounded_and_affine_invariant(
        d in prop::collection::vec(-100.0..100.0f64, 12..80),
        scale in 0.01..50.0f64,
        shift in -100.0..100.0f64,
    ) {
        let n_cut = d.len() - 1;
        let k = k_correlation(&d, n_cut).unwrap();
        prop_assert!((-1.0..=1.0).contains(&k.value));
        let moved: Vec<f64> = d.iter().map(|v| scale * v + shift).collect();
        let k2 = k_correlation(&moved, n_cut).unwrap();
        if !k.flagged {
            prop_assert!((k.value - k2.value).abs() < 1e-9);
        }
    }

    #[test]
    fn fock_labels_round_trip(m in 0usize..10, c in 0usize..20, a in 0usize..2) {
        let label = FockLabel::new(m, c, a);
        prop_assert_eq!(FockLabel::parse(&format!("{m}, {c}, {a}")).unwrap(), label);
        let idx = label.index(10, 20).unwrap();
        prop_assert_eq!(idx, (m * 20 + c) * 2 + a);
    }

    #[test]
    fn observable_csv_round_trips(rows in prop::collection::vec(prop::array::uniform9(-1e6..1e6f64), 1..20), flag in any::<bool>()) {
        let mut s = ObservableSeries::default();
        for r in &rows {
            let q = QuantumObservables { n_m: r[1], n_c: r[2], n_a: r[3], x_m: r[4], p_m: r[5], corr: r[6] };
            s.push(r[0], &q, r[7], r[8], flag);
        }
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = ObservableSeries::read_csv(std::io::Cursor::new(buf), "mem").unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn diagram_files_round_trip(
        cells in prop::collection::vec((prop::option::of(-1e3..1e3f64), 0u8..4), 6),
    ) {
        let phase = |k: u8| match k {
            0 => CellPhase::Phase(Phase::Regular),
            1 => CellPhase::Phase(Phase::TimeCrystal),
            2 => CellPhase::Phase(Phase::Chaotic),
            _ => CellPhase::Error,
        };
        let mut d = PhaseDiagram {
            g_ac_axis: vec![0.0, 0.1, 0.2],
            g_mc_axis: vec![1.0 / 3.0, 4.0],
            r_map: vec![vec![None; 2]; 3],
            k_map: vec![vec![None; 2]; 3],
            phase_map: vec![vec![CellPhase::Error; 2]; 3],
            provenance: None,
        };
        for (idx, (v, k)) in cells.iter().enumerate() {
            let (i, j) = (idx / 2, idx % 2);
            let p = if v.is_none() { CellPhase::Error } else { phase(*k) };
            d.phase_map[i][j] = p;
            if p != CellPhase::Error {
                d.r_map[i][j] = *v;
                d.k_map[i][j] = v.map(|x| x / 7.0);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phase_diagram.csv");
        save_diagram(&d, &path).unwrap();
        let back = load_diagram(&path).unwrap();
        prop_assert!(d.same_maps(&back));
    }
}
