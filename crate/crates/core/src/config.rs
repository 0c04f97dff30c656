//! JSON file formats and instance configuration.
//!
//! References to lattices, bases, measurement sets and states accept a
//! built-in shorthand, a path (relative to the referencing file), or an
//! inline object.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::basis::{Construction, OperatorBasis};
use crate::dual::{require_strict_interior, MeasurementSet, Povm};
use crate::error::{usage, Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{c, CMatrix, CVector, HermitianOperator, PureState};
use crate::peps::{default_recipe2_states, identity_site_map, recipe1_site_map, recipe2_site_map, PepsInstance, SiteMap};
use crate::sampling::MeasurementPlan;

/// `{"dim": rows, "re": [[..]], "im": [[..]]}`; `im` may be omitted.
/// Rectangular matrices (Kraus operators) take their column count from the rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixLiteral {
    pub dim: usize,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<Vec<f64>>,
}

impl MatrixLiteral {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |f: &dyn Fn(usize, usize) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(i, j)).collect()).collect();
        Self {
            dim: m.nrows(),
            re: rows(&|i, j| m[(i, j)].re),
            im: rows(&|i, j| m[(i, j)].im),
        }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        if self.re.len() != self.dim {
            return usage(format!("matrix declares dim {} but has {} rows", self.dim, self.re.len()));
        }
        let cols = self.re.first().map_or(0, Vec::len);
        if cols == 0 || self.re.iter().any(|r| r.len() != cols) {
            return usage("matrix rows are empty or ragged");
        }
        if !self.im.is_empty() && (self.im.len() != self.dim || self.im.iter().any(|r| r.len() != cols)) {
            return usage("imaginary part has a different shape");
        }
        let m = CMatrix::from_fn(self.dim, cols, |i, j| {
            c(self.re[i][j], self.im.get(i).map_or(0.0, |r| r[j]))
        });
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(m)
    }

    pub fn to_hermitian(&self) -> Result<HermitianOperator> {
        let m = self.to_matrix()?;
        if m.ncols() != m.nrows() {
            return usage("operator matrix must be square");
        }
        HermitianOperator::new(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLiteral {
    pub dim: usize,
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub im: Vec<f64>,
}

impl StateLiteral {
    pub fn from_state(s: &PureState) -> Self {
        Self {
            dim: s.dim(),
            re: s.amplitudes().iter().map(|z| z.re).collect(),
            im: s.amplitudes().iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_state(&self) -> Result<PureState> {
        if self.re.len() != self.dim || (!self.im.is_empty() && self.im.len() != self.dim) {
            return usage("state amplitudes do not match dim");
        }
        PureState::new(CVector::from_fn(self.dim, |i, _| c(self.re[i], self.im.get(i).copied().unwrap_or(0.0))))
    }
}

/// `zero:d`, `uniform:d` or `bloch111:n` (n-fold product of the Bloch-(1,1,1) qubit state).
pub fn state_from_shorthand(spec: &str) -> Result<PureState> {
    let bad = || Error::Usage(format!("unrecognized state shorthand '{spec}'"));
    let (kind, arg) = spec.split_once(':').ok_or_else(bad)?;
    let n: usize = arg.parse().map_err(|_| bad())?;
    match kind {
        "zero" => PureState::basis(n, 0),
        "uniform" => PureState::uniform(n),
        "bloch111" => {
            if n == 0 || n > 12 {
                return Err(bad());
            }
            PureState::product(&vec![PureState::bloch(1.0, 1.0, 1.0)?; n])
        }
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisFile {
    #[serde(rename = "D")]
    pub bond_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<StateLiteral>,
    pub elements: Vec<MatrixLiteral>,
    pub construction: Construction,
}

impl BasisFile {
    pub fn from_basis(b: &OperatorBasis) -> Self {
        Self {
            bond_dim: b.bond_dim(),
            anchor: b.anchor().map(StateLiteral::from_state),
            elements: b.elements().iter().map(|e| MatrixLiteral::from_matrix(e.matrix())).collect(),
            construction: b.construction(),
        }
    }

    pub fn to_basis(&self) -> Result<OperatorBasis> {
        let elements = self.elements.iter().map(MatrixLiteral::to_hermitian).collect::<Result<Vec<_>>>()?;
        let anchor = self.anchor.as_ref().map(StateLiteral::to_state).transpose()?;
        OperatorBasis::new(self.bond_dim, elements, anchor, self.construction)
    }
}

/// Anchor names accepted by `aligned:D:<anchor>`.
pub fn anchor_from_name(name: &str, bond_dim: usize) -> Result<PureState> {
    match name {
        "zero" => PureState::basis(bond_dim, 0),
        "plus-diag" | "uniform" => PureState::uniform(bond_dim),
        _ => usage(format!("unknown anchor '{name}' (expected zero or plus-diag)")),
    }
}

/// `aligned:D:zero`, `aligned:D:plus-diag` or `phase_point`.
pub fn basis_from_shorthand(spec: &str) -> Result<OperatorBasis> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["phase_point"] | ["phase-point"] => Ok(OperatorBasis::phase_point()),
        ["aligned", d, anchor] => {
            let d: usize = d.parse().map_err(|_| Error::Usage(format!("bad bond dimension in '{spec}'")))?;
            OperatorBasis::aligned(d, anchor_from_name(anchor, d)?)
        }
        _ => usage(format!("unrecognized basis shorthand '{spec}'")),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PovmEntry {
    pub label: String,
    pub elements: Vec<MatrixLiteral>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementFile {
    pub dim: usize,
    pub povms: Vec<PovmEntry>,
}

impl MeasurementFile {
    pub fn from_set(set: &MeasurementSet) -> Self {
        Self {
            dim: set.dim(),
            povms: set
                .povms()
                .iter()
                .map(|p| PovmEntry {
                    label: p.label().to_string(),
                    elements: p.elements().iter().map(|e| MatrixLiteral::from_matrix(e.matrix())).collect(),
                })
                .collect(),
        }
    }

    pub fn to_set(&self) -> Result<MeasurementSet> {
        let povms = self
            .povms
            .iter()
            .map(|p| {
                let elements = p.elements.iter().map(MatrixLiteral::to_hermitian).collect::<Result<Vec<_>>>()?;
                Povm::new(p.label.clone(), elements)
            })
            .collect::<Result<Vec<_>>>()?;
        let set = MeasurementSet::new(povms)?;
        if set.dim() != self.dim {
            return usage(format!("measurement file declares dim {} but elements have dim {}", self.dim, set.dim()));
        }
        Ok(set)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeFile {
    pub n_sites: usize,
    pub edges: Vec<(usize, usize)>,
}

impl LatticeFile {
    pub fn from_lattice(l: &Lattice) -> Self {
        Self {
            n_sites: l.n_sites(),
            edges: l.edges().to_vec(),
        }
    }

    pub fn to_lattice(&self) -> Result<Lattice> {
        Lattice::new(self.n_sites, self.edges.clone())
    }
}

/// A shorthand-or-path string, or an inline object.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ref<T> {
    Name(String),
    Inline(T),
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn resolve<T: DeserializeOwned, O>(
    r: &Ref<T>,
    base: &Path,
    convert: impl Fn(&T) -> Result<O>,
    shorthand: impl Fn(&str) -> Option<Result<O>>,
) -> Result<O> {
    match r {
        Ref::Inline(v) => convert(v),
        Ref::Name(name) => {
            if let Some(out) = shorthand(name) {
                return out;
            }
            let path = base.join(name);
            if !path.exists() {
                return usage(format!("'{name}' is neither a known shorthand nor an existing file"));
            }
            convert(&read_json::<T>(&path)?)
        }
    }
}

fn is_shorthand(name: &str, prefixes: &[&str]) -> bool {
    prefixes.iter().any(|p| name == *p || name.starts_with(&format!("{p}:")))
}

pub fn resolve_lattice(r: &Ref<LatticeFile>, base: &Path) -> Result<Lattice> {
    resolve(r, base, |f: &LatticeFile| f.to_lattice(), |n| {
        is_shorthand(n, &["chain", "cycle", "torus"]).then(|| Lattice::from_shorthand(n))
    })
}

pub fn resolve_basis(r: &Ref<BasisFile>, base: &Path) -> Result<OperatorBasis> {
    resolve(r, base, |f: &BasisFile| f.to_basis(), |n| {
        is_shorthand(n, &["aligned", "phase_point", "phase-point"]).then(|| basis_from_shorthand(n))
    })
}

pub fn resolve_measurements(r: &Ref<MeasurementFile>, base: &Path) -> Result<MeasurementSet> {
    resolve(r, base, |f: &MeasurementFile| f.to_set(), |n| {
        is_shorthand(n, &["pauli", "noisy-pauli", "bell"]).then(|| MeasurementSet::builtin(n))
    })
}

pub fn resolve_state(r: &Ref<StateLiteral>, base: &Path) -> Result<PureState> {
    resolve(r, base, |f: &StateLiteral| f.to_state(), |n| {
        is_shorthand(n, &["zero", "uniform", "bloch111"]).then(|| state_from_shorthand(n))
    })
}

/// `1`, `2`, `"identity"` or `"kraus"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecipeTag {
    Number(u8),
    Name(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recipe {
    One,
    Two,
    Identity,
    Kraus,
}

impl RecipeTag {
    pub fn recipe(&self) -> Result<Recipe> {
        match self {
            RecipeTag::Number(1) => Ok(Recipe::One),
            RecipeTag::Number(2) => Ok(Recipe::Two),
            RecipeTag::Name(s) if s == "1" => Ok(Recipe::One),
            RecipeTag::Name(s) if s == "2" => Ok(Recipe::Two),
            RecipeTag::Name(s) if s == "identity" => Ok(Recipe::Identity),
            RecipeTag::Name(s) if s == "kraus" => Ok(Recipe::Kraus),
            other => usage(format!("unknown recipe {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub recipe: RecipeTag,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Explicit `ψ_y` for recipe 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_y: Option<Vec<StateLiteral>>,
    /// Explicit Kraus operators for recipe `"kraus"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<MatrixLiteral>>,
}

impl MapSpec {
    pub fn uniform(recipe: RecipeTag, epsilon: f64, seed: u64) -> Self {
        Self {
            recipe,
            epsilon,
            seed,
            psi_y: None,
            kraus: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub lattice: Ref<LatticeFile>,
    /// Defaults to `phase_point` for identity maps and `aligned:2:zero` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Ref<BasisFile>>,
    pub measurement_set: Ref<MeasurementFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<Ref<StateLiteral>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_map: Option<MapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_maps: Option<Vec<MapSpec>>,
}

/// Per-build overrides used by the ε search and the benchmark.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub lattice: Option<Lattice>,
}

/// An instance spec with the directory its relative paths resolve against.
#[derive(Clone, Debug)]
pub struct InstanceConfig {
    pub spec: InstanceSpec,
    pub base_dir: PathBuf,
}

impl InstanceConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let spec = read_json(path)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { spec, base_dir })
    }

    pub fn inline(spec: InstanceSpec) -> Self {
        Self {
            spec,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn build(&self) -> Result<PepsInstance> {
        self.build_with(&Overrides::default())
    }

    pub fn build_with(&self, overrides: &Overrides) -> Result<PepsInstance> {
        let spec = &self.spec;
        let base = &self.base_dir;
        let lattice = match &overrides.lattice {
            Some(l) => l.clone(),
            None => resolve_lattice(&spec.lattice, base)?,
        };
        let set = resolve_measurements(&spec.measurement_set, base)?;
        let d = spec.physical_dim.unwrap_or(set.dim());
        if d != set.dim() {
            return usage(format!("physical_dim {d} differs from the measurement dimension {}", set.dim()));
        }

        let map_specs: Vec<MapSpec> = match (&spec.site_map, &spec.site_maps) {
            (Some(m), None) => vec![m.clone(); lattice.n_sites()],
            (None, Some(ms)) if overrides.lattice.is_none() => ms.clone(),
            (None, Some(_)) => return usage("per-site maps cannot follow a lattice override"),
            _ => return usage("give exactly one of site_map or site_maps"),
        };
        if map_specs.len() != lattice.n_sites() {
            return usage(format!("{} site maps for {} sites", map_specs.len(), lattice.n_sites()));
        }
        let recipes = map_specs.iter().map(|m| m.recipe.recipe()).collect::<Result<Vec<_>>>()?;

        let basis = match &spec.basis {
            Some(r) => resolve_basis(r, base)?,
            None if recipes.iter().all(|&r| r == Recipe::Identity) => OperatorBasis::phase_point(),
            None => OperatorBasis::aligned(2, PureState::basis(2, 0)?)?,
        };

        let needs_psi = recipes.iter().any(|r| matches!(r, Recipe::One | Recipe::Two));
        let psi = match (&spec.psi, needs_psi) {
            (Some(r), true) => {
                let psi = resolve_state(r, base)?;
                if psi.dim() != d {
                    return usage(format!("psi has dimension {}, physical dimension is {d}", psi.dim()));
                }
                require_strict_interior(&psi, &set)?;
                Some(psi)
            }
            (None, true) => return usage("recipes 1 and 2 need an interior state psi"),
            _ => None,
        };

        let maps = map_specs
            .iter()
            .zip(&recipes)
            .enumerate()
            .map(|(s, (m, &recipe))| {
                let eps = overrides.epsilon.unwrap_or(m.epsilon);
                let v = lattice.degree(s);
                match recipe {
                    Recipe::Two => {
                        let psi_y = match &m.psi_y {
                            Some(list) => list.iter().map(StateLiteral::to_state).collect::<Result<Vec<_>>>()?,
                            None => default_recipe2_states(psi.as_ref().expect("psi resolved"), v).map_err(|e| match e {
                                Error::Constraint(msg) => Error::Constraint(format!("site {s}: {msg}")),
                                other => other,
                            })?,
                        };
                        recipe2_site_map(v, d, psi_y, eps)
                    }
                    Recipe::One => {
                        let phi = basis
                            .anchor()
                            .ok_or_else(|| Error::Usage("recipe 1 needs an anchored basis".into()))?;
                        let anchors: Vec<PureState> = lattice
                            .roles(s)
                            .iter()
                            .map(|r| if r.transposed() { phi.conj() } else { phi.clone() })
                            .collect();
                        recipe1_site_map(v, d, psi.as_ref().expect("psi resolved"), &anchors, eps, m.seed)
                    }
                    Recipe::Identity => identity_site_map(v),
                    Recipe::Kraus => {
                        let kraus = m
                            .kraus
                            .as_ref()
                            .ok_or_else(|| Error::Usage(format!("site {s}: recipe kraus needs a kraus list")))?
                            .iter()
                            .map(MatrixLiteral::to_matrix)
                            .collect::<Result<Vec<_>>>()?;
                        SiteMap::from_kraus(v, basis.bond_dim(), kraus, "kraus")
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        PepsInstance::new(lattice, maps, basis, set)
    }
}

/// `{"uniform": label}` or `{"per_site": [label, ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanFile {
    Uniform(String),
    PerSite(Vec<String>),
}

impl PlanFile {
    pub fn to_plan(&self, set: &MeasurementSet, n_sites: usize) -> Result<MeasurementPlan> {
        match self {
            PlanFile::Uniform(label) => MeasurementPlan::uniform(set, n_sites, label),
            PlanFile::PerSite(labels) => {
                if labels.len() != n_sites {
                    return usage(format!("plan lists {} sites, instance has {n_sites}", labels.len()));
                }
                MeasurementPlan::from_labels(set, labels)
            }
        }
    }

    /// A plan file path, or `uniform:<label>`.
    pub fn resolve(arg: &str) -> Result<Self> {
        if let Some(label) = arg.strip_prefix("uniform:") {
            if !Path::new(arg).exists() {
                return Ok(PlanFile::Uniform(label.to_string()));
            }
        }
        read_json(Path::new(arg))
    }
}
