use vsqs_core::evolve::measure_energy;
use vsqs_core::operators::{basis_state, Axis, PauliWord};
use vsqs_core::problems::*;
use vsqs_core::schedule::ScheduleSpec;
use vsqs_core::Error;

fn load(name: &str) -> AnnealProblem {
    AnnealProblem::from_file(data_dir().join(name)).unwrap()
}

fn words(list: &vsqs_core::operators::TermList) -> Vec<PauliWord> {
    list.schedulable().map(|t| t.word.clone()).collect()
}

#[test]
fn bundled_h2_term_structure() {
    let p = load("h2_d1.00.ham");
    assert_eq!(p.h_fin.schedulable_count(), 4);
    assert_eq!(p.h_ini.schedulable_count(), 2);
    assert!(p.h_fin.identity_offset() != 0.0);
    let ini: Vec<f64> = p.h_ini.schedulable().map(|t| t.coefficient).collect();
    assert_eq!(ini[0], ini[1]);
}

#[test]
fn every_bond_length_file_is_present() {
    for d in ["0.50", "0.75", "1.00", "1.25", "1.50", "1.80", "2.00", "2.50", "2.80", "3.00", "3.30", "3.60"] {
        let p = load(&format!("h2_d{d}.ham"));
        assert_eq!(p.n_qubits(), 2);
        assert_eq!(p.metadata["d"], d);
    }
}

#[test]
fn identity_only_file_has_constant_energy() {
    let f = parse_hamiltonian("qubits 2\nini\n1.0 X0\nfin\n-0.75\n", None).unwrap();
    assert_eq!(f.h_fin.schedulable_count(), 0);
    for b in 0..4 {
        assert_eq!(measure_energy(&basis_state(2, b), &f.h_fin, None, 0).unwrap(), -0.75);
    }
}

#[test]
fn p4_file_admits_largest_grouping() {
    let p = load("p4_d2.00.ham");
    assert_eq!(p.n_qubits(), 6);
    assert!(ScheduleSpec::new((5, 6, 10), 0, 10.0, p.term_counts()).is_ok());
}

#[test]
fn malformed_files_are_rejected() {
    let cases = [
        "qubits 2\nini\n1.0 X0\nfin\n1.0 Q0\n",
        "qubits 2\nini\n1.0 X0\nfin\n1.0 Z2\n",
        "qubits 2\nini\n1.0 X0\nfin\n1.0 Z0\nfin\n1.0 Z1\n",
        "qubits 2\nini\n1.0 X0\nfin\nabc Z0\n",
    ];
    for text in cases {
        assert!(matches!(parse_hamiltonian(text, None), Err(Error::Parse { .. })), "{text:?}");
    }
}

#[test]
fn write_then_load_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    for p in [load("h2_d2.50.ham"), load("p4_d2.00.ham"), generate_triangular_ising(5, 9).unwrap()] {
        let path = dir.path().join("out.ham");
        write_hamiltonian(&p.to_hamiltonian_file(), &path).unwrap();
        let back = AnnealProblem::from_file(&path).unwrap();
        assert_eq!(back.h_ini, p.h_ini);
        assert_eq!(back.h_fin, p.h_fin);
        assert_eq!(back.h_nav, p.h_nav);
        assert_eq!(back.metadata, p.metadata);
    }
}

#[test]
fn ising_size_and_signs() {
    let p = generate_triangular_ising(4, 1).unwrap();
    assert_eq!(p.n_qubits(), 8);
    assert_eq!(p.metadata["seed"], "1");
    let q = generate_triangular_ising(3, 5).unwrap();
    let (intra, vertical) = triangular_strip_edges(3);
    for t in q.h_fin.schedulable() {
        let f = t.word.factors();
        let edge = (f[0].0, f[1].0);
        if intra.contains(&edge) {
            assert!(t.coefficient > 0.0 && t.coefficient <= 1.0);
        } else {
            assert!(vertical.contains(&edge));
            assert!(t.coefficient < 0.0 && t.coefficient >= -1.0);
        }
    }
    assert!(matches!(generate_triangular_ising(2, 0), Err(Error::Config(_))));
}

#[test]
fn ising_generation_is_deterministic() {
    assert_eq!(generate_triangular_ising(4, 3).unwrap(), generate_triangular_ising(4, 3).unwrap());
    assert_ne!(generate_triangular_ising(4, 3).unwrap().h_fin, generate_triangular_ising(4, 4).unwrap().h_fin);
}

#[test]
fn every_layer_contains_a_frustrated_triangle() {
    for per_layer in 3..7 {
        let (intra, _) = triangular_strip_edges(per_layer);
        let has = |a: usize, b: usize| intra.contains(&(a.min(b), a.max(b)));
        let n = 2 * per_layer;
        let triangle = (0..n).any(|a| (a + 1..n).any(|b| (b + 1..n).any(|c| has(a, b) && has(b, c) && has(a, c))));
        assert!(triangle, "per_layer {per_layer}");
    }
}

#[test]
fn bundled_ising_matches_generator() {
    let p = load("ising_n8_seed1.ham");
    let g = generate_triangular_ising(4, 1).unwrap();
    assert_eq!(p.h_fin, g.h_fin);
    assert_eq!(p.h_ini, g.h_ini);
    assert_eq!(p.h_nav, g.h_nav);
}

#[test]
fn zero_noise_leaves_couplings() {
    let p = load("h2_d1.00.ham");
    let q = perturb_couplings(&p, NoiseSpec { mean: 0.0, std: 0.0, seed: 4 }).unwrap();
    assert_eq!(q.h_fin, p.h_fin);
    assert_eq!(q.h_ini, p.h_ini);
}

#[test]
fn perturbation_keeps_reference_and_identity() {
    let p = load("h2_d1.00.ham");
    let noise = NoiseSpec { mean: 0.2, std: 0.2, seed: 7 };
    let q = perturb_couplings(&p, noise).unwrap();
    assert_eq!(q.accurate_h_fin, p.h_fin);
    assert_eq!(q.h_ini, p.h_ini);
    assert_eq!(q.h_fin.identity_offset(), p.h_fin.identity_offset());
    assert_ne!(q.h_fin, p.h_fin);
    assert_eq!(perturb_couplings(&p, noise).unwrap(), q);
}

#[test]
fn perturbation_statistics() {
    for (mean, std) in [(0.0, 0.1), (0.2, 0.2)] {
        let n = 10_000;
        let xi = NoiseSpec { mean, std, seed: 123 }.draws(n).unwrap();
        let m = xi.iter().sum::<f64>() / n as f64;
        let s = (xi.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((m - mean).abs() < 3.0 * std / (n as f64).sqrt());
        assert!((s - std).abs() < 3.0 * std / (2.0 * (n - 1) as f64).sqrt());
    }
    assert!(NoiseSpec { mean: 0.0, std: -1.0, seed: 0 }.draws(1).is_err());
}

#[test]
fn gucc_navigator_copies_final_words() {
    let p = load("h2_d1.00.ham");
    let nav = navigator_gucc(&p).unwrap();
    let expected = vec![
        PauliWord::single(0, Axis::Z),
        PauliWord::single(1, Axis::Z),
        PauliWord::new([(0, Axis::Z), (1, Axis::Z)]).unwrap(),
        PauliWord::new([(0, Axis::X), (1, Axis::X)]).unwrap(),
    ];
    assert_eq!(words(&nav), expected);
    assert!(nav.terms().iter().all(|t| t.coefficient == 1.0));

    let empty =
        AnnealProblem::from_hamiltonian_file("c", parse_hamiltonian("qubits 1\nini\n1 X0\nfin\n2\n", None).unwrap())
            .unwrap();
    assert_eq!(navigator_gucc(&empty).unwrap().schedulable_count(), 0);

    let ising = generate_triangular_ising(4, 1).unwrap();
    assert_eq!(words(&navigator_gucc(&ising).unwrap()), words(&ising.h_fin));
}
