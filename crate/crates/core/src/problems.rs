//! Benchmark problems: the Hamiltonian text format, the two-layer triangular
//! Ising generator, coupling perturbation and the GUCC-style navigator.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{Axis, PauliTerm, PauliWord, TermList};

/// A Hamiltonian file: `qubits <n>`, `# key=value` metadata, `ini` and `fin`
/// sections with one `<coefficient> <factor>*` term per line.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianFile {
    pub h_ini: TermList,
    pub h_fin: TermList,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Ini,
    Fin,
}

pub fn parse_hamiltonian(text: &str, path: Option<&Path>) -> Result<HamiltonianFile> {
    let err = |line: usize, msg: String| Error::Parse { path: path.map(Path::to_path_buf), line, msg };
    let mut n_qubits: Option<usize> = None;
    let mut metadata = BTreeMap::new();
    let mut section: Option<Section> = None;
    let mut seen = Vec::new();
    let mut ini = Vec::new();
    let mut fin = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.trim().split_once('=') {
                metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let head = fields.next().unwrap();
        if n_qubits.is_none() {
            if head != "qubits" {
                return Err(err(lineno, "expected `qubits <n>` header".into()));
            }
            let n = fields
                .next()
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&n| n > 0)
                .ok_or_else(|| err(lineno, "qubit count must be a positive integer".into()))?;
            if fields.next().is_some() {
                return Err(err(lineno, "trailing tokens after qubit count".into()));
            }
            n_qubits = Some(n);
            continue;
        }
        let n = n_qubits.unwrap();
        match head {
            "ini" | "fin" => {
                let s = if head == "ini" { Section::Ini } else { Section::Fin };
                if seen.contains(&s) {
                    return Err(err(lineno, format!("duplicate `{head}` section")));
                }
                if fields.next().is_some() {
                    return Err(err(lineno, "trailing tokens after section header".into()));
                }
                seen.push(s);
                section = Some(s);
            }
            "qubits" => return Err(err(lineno, "duplicate `qubits` header".into())),
            _ => {
                let coefficient: f64 =
                    head.parse().map_err(|_| err(lineno, format!("malformed coefficient `{head}`")))?;
                if !coefficient.is_finite() {
                    return Err(err(lineno, "coefficient must be finite".into()));
                }
                let mut factors = Vec::new();
                for tok in fields {
                    let mut chars = tok.chars();
                    let axis = match chars.next() {
                        Some('X') => Axis::X,
                        Some('Y') => Axis::Y,
                        Some('Z') => Axis::Z,
                        _ => return Err(err(lineno, format!("malformed factor `{tok}`"))),
                    };
                    let q: usize =
                        chars.as_str().parse().map_err(|_| err(lineno, format!("malformed factor `{tok}`")))?;
                    if q >= n {
                        return Err(err(lineno, format!("qubit index {q} >= declared {n}")));
                    }
                    factors.push((q, axis));
                }
                let word = PauliWord::new(factors).map_err(|e| err(lineno, e.to_string()))?;
                let term = PauliTerm::new(coefficient, word);
                match section {
                    Some(Section::Ini) => ini.push(term),
                    Some(Section::Fin) => fin.push(term),
                    None => return Err(err(lineno, "term outside of an `ini`/`fin` section".into())),
                }
            }
        }
    }
    let n = n_qubits.ok_or_else(|| err(0, "missing `qubits` header".into()))?;
    Ok(HamiltonianFile { h_ini: TermList::new(n, ini)?, h_fin: TermList::new(n, fin)?, metadata })
}

pub fn load_hamiltonian(path: impl AsRef<Path>) -> Result<HamiltonianFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_hamiltonian(&text, Some(path))
}

fn write_terms(out: &mut String, terms: &TermList) {
    for t in terms.terms() {
        // 17 significant digits round-trip every f64
        let _ = write!(out, "{:.16e}", t.coefficient);
        for &(q, a) in t.word.factors() {
            let _ = write!(out, " {}{}", a.symbol(), q);
        }
        out.push('\n');
    }
}

pub fn format_hamiltonian(file: &HamiltonianFile) -> String {
    let mut out = format!("qubits {}\n", file.h_fin.n_qubits());
    for (k, v) in &file.metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str("ini\n");
    write_terms(&mut out, &file.h_ini);
    out.push_str("fin\n");
    write_terms(&mut out, &file.h_fin);
    out
}

pub fn write_hamiltonian(file: &HamiltonianFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_hamiltonian(file)).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

/// Initial, final and optional navigator Hamiltonians of one annealing task.
///
/// `accurate_h_fin` holds the reference couplings used for every reported
/// energy; it differs from `h_fin` only after [`perturb_couplings`].
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealProblem {
    pub name: String,
    pub h_ini: TermList,
    pub h_fin: TermList,
    pub h_nav: Option<TermList>,
    pub accurate_h_fin: TermList,
    pub metadata: BTreeMap<String, String>,
}

impl AnnealProblem {
    pub fn new(name: impl Into<String>, h_ini: TermList, h_fin: TermList) -> Result<Self> {
        if h_ini.n_qubits() != h_fin.n_qubits() {
            return Err(Error::DimensionMismatch { expected: h_fin.n_qubits(), got: h_ini.n_qubits() });
        }
        Ok(AnnealProblem {
            name: name.into(),
            accurate_h_fin: h_fin.clone(),
            h_ini,
            h_fin,
            h_nav: None,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_navigator(mut self, h_nav: TermList) -> Result<Self> {
        if h_nav.n_qubits() != self.n_qubits() {
            return Err(Error::DimensionMismatch { expected: self.n_qubits(), got: h_nav.n_qubits() });
        }
        self.h_nav = Some(h_nav);
        Ok(self)
    }

    pub fn without_navigator(mut self) -> Self {
        self.h_nav = None;
        self
    }

    /// Loads a Hamiltonian file. Ising instances (`# problem=triangular-ising`)
    /// get their sigma-x sigma-x edge navigator reattached.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = load_hamiltonian(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "problem".into());
        Self::from_hamiltonian_file(name, file)
    }

    pub fn from_hamiltonian_file(name: impl Into<String>, file: HamiltonianFile) -> Result<Self> {
        let is_ising = file.metadata.get("problem").map(String::as_str) == Some(ISING_KIND);
        let mut p = AnnealProblem::new(name, file.h_ini, file.h_fin)?;
        p.metadata = file.metadata;
        if is_ising {
            let nav = edge_navigator(&p.h_fin)?;
            p = p.with_navigator(nav)?;
        }
        Ok(p)
    }

    pub fn to_hamiltonian_file(&self) -> HamiltonianFile {
        HamiltonianFile { h_ini: self.h_ini.clone(), h_fin: self.h_fin.clone(), metadata: self.metadata.clone() }
    }

    pub fn n_qubits(&self) -> usize {
        self.h_fin.n_qubits()
    }

    /// Schedulable term counts `[initial, final, navigator]`.
    pub fn term_counts(&self) -> [usize; 3] {
        [
            self.h_ini.schedulable_count(),
            self.h_fin.schedulable_count(),
            self.h_nav.as_ref().map_or(0, TermList::schedulable_count),
        ]
    }
}

pub const ISING_KIND: &str = "triangular-ising";

/// Sigma-x sigma-x on every two-body word of `h_fin`, unit coefficients.
pub fn edge_navigator(h_fin: &TermList) -> Result<TermList> {
    let terms = h_fin
        .schedulable()
        .filter(|t| t.word.factors().len() == 2)
        .map(|t| {
            let w = PauliWord::new(t.word.factors().iter().map(|&(q, _)| (q, Axis::X)))?;
            Ok(PauliTerm::new(1.0, w))
        })
        .collect::<Result<Vec<_>>>()?;
    TermList::new(h_fin.n_qubits(), terms)
}

/// Coupling edges of the two-layer triangular strip: intra-layer edges of
/// layer 0, intra-layer edges of layer 1, then vertical inter-layer edges.
pub fn triangular_strip_edges(per_layer: usize) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut intra = Vec::new();
    for layer in 0..2 {
        let o = layer * per_layer;
        for i in 0..per_layer - 1 {
            intra.push((o + i, o + i + 1));
        }
        for i in 0..per_layer.saturating_sub(2) {
            intra.push((o + i, o + i + 2));
        }
    }
    let inter = (0..per_layer).map(|i| (i, i + per_layer)).collect();
    (intra, inter)
}

/// Random two-layer triangular Ising instance: antiferromagnetic intra-layer
/// couplings in (0, 1], ferromagnetic inter-layer couplings in [-1, 0),
/// transverse-field initial Hamiltonian and an edge navigator.
pub fn generate_triangular_ising(per_layer: usize, seed: u64) -> Result<AnnealProblem> {
    if per_layer < 3 {
        return Err(Error::config("triangular Ising strip needs at least 3 vertices per layer"));
    }
    let n = 2 * per_layer;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (intra, inter) = triangular_strip_edges(per_layer);
    let zz = |(a, b): (usize, usize), j: f64| {
        PauliTerm::new(j, PauliWord::new([(a, Axis::Z), (b, Axis::Z)]).expect("distinct qubits"))
    };
    let mut fin = Vec::new();
    for &e in &intra {
        let j_af = 1.0 - rng.gen::<f64>();
        fin.push(zz(e, j_af));
    }
    for &e in &inter {
        let j_f = -(1.0 - rng.gen::<f64>());
        fin.push(zz(e, j_f));
    }
    let h_fin = TermList::new(n, fin)?;
    let h_ini = TermList::new(n, (0..n).map(|q| PauliTerm::new(1.0, PauliWord::single(q, Axis::X))))?;
    let nav = edge_navigator(&h_fin)?;
    let mut p = AnnealProblem::new(format!("ising_n{n}_seed{seed}"), h_ini, h_fin)?.with_navigator(nav)?;
    p.metadata.insert("problem".into(), ISING_KIND.into());
    p.metadata.insert("per_layer".into(), per_layer.to_string());
    p.metadata.insert("seed".into(), seed.to_string());
    p.metadata.insert("coupling_af".into(), "uniform(0,1]".into());
    p.metadata.insert("coupling_f".into(), "uniform[-1,0)".into());
    Ok(p)
}

/// Gaussian control error on the final couplings, `xi ~ N(mean, std)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn draws(&self, count: usize) -> Result<Vec<f64>> {
        if !(self.std >= 0.0) {
            return Err(Error::config("noise standard deviation must be non-negative"));
        }
        let dist = Normal::new(self.mean, self.std).map_err(|e| Error::config(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Ok((0..count).map(|_| dist.sample(&mut rng)).collect())
    }
}

/// Perturbs every schedulable coupling of `h_fin`; `accurate_h_fin` keeps the
/// original values and `h_ini` is untouched.
pub fn perturb_couplings(problem: &AnnealProblem, noise: NoiseSpec) -> Result<AnnealProblem> {
    let xi = noise.draws(problem.h_fin.schedulable_count())?;
    let perturbed: Vec<f64> = problem.h_fin.schedulable().zip(&xi).map(|(t, x)| t.coefficient + x).collect();
    let mut p = problem.clone();
    p.h_fin = problem.h_fin.with_schedulable_coefficients(&perturbed)?;
    p.metadata.insert("noise".into(), format!("N({}, {}) seed {}", noise.mean, noise.std, noise.seed));
    Ok(p)
}

/// Navigator made of every schedulable Pauli word of `h_fin` with unit
/// weight; the schedule carries the variational amplitude.
pub fn navigator_gucc(problem: &AnnealProblem) -> Result<TermList> {
    TermList::new(problem.n_qubits(), problem.h_fin.schedulable().map(|t| PauliTerm::new(1.0, t.word.clone())))
}

/// Bundled data directory of this workspace.
pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
