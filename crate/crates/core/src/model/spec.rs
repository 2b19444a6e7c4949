//! Static network description and its JSON document form.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::params::Params;
use super::{ClassId, ModelError, StationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    #[serde(rename = "FCFS", alias = "fcfs")]
    Fcfs,
    #[serde(rename = "PS", alias = "ps")]
    Ps,
}

/// Gamma(shape, rate) hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self { shape: 1.0, rate: 1e-3 }
    }
}

impl GammaPrior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationDoc {
    #[serde(default)]
    pub name: Option<String>,
    pub discipline: Discipline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteEntryDoc {
    pub to: StationId,
    /// Class after routing; defaults to the row's class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingRowDoc {
    pub from: StationId,
    pub class: String,
    #[serde(default)]
    pub fixed: bool,
    pub entries: Vec<RouteEntryDoc>,
    /// Dirichlet pseudo-counts, one per entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
}

fn default_pseudo_count() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorDoc {
    #[serde(default)]
    pub arrival: GammaPrior,
    #[serde(default)]
    pub service: GammaPrior,
    #[serde(default = "default_pseudo_count")]
    pub routing_pseudo_count: f64,
    /// Per-symbol overrides, keyed by names such as `lambda[c1]` or `mu[2][c1]`.
    #[serde(default)]
    pub overrides: BTreeMap<String, GammaPrior>,
}

impl Default for PriorDoc {
    fn default() -> Self {
        Self {
            arrival: GammaPrior::default(),
            service: GammaPrior::default(),
            routing_pseudo_count: 1.0,
            overrides: BTreeMap::new(),
        }
    }
}

/// Serialized form of [`NetworkSpec`]. Stations are numbered `1..=M` in
/// document order; station `0` is the exterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpecDoc {
    pub stations: Vec<StationDoc>,
    pub classes: Vec<String>,
    pub arrival_rates: Vec<f64>,
    /// `service_rates[i - 1][c]` is the rate of class `c` at station `i`.
    pub service_rates: Vec<Vec<f64>>,
    /// Groups of `(station, class)` pairs that share one service rate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shared_service_rates: Vec<Vec<(StationId, String)>>,
    pub routing: Vec<RoutingRowDoc>,
    pub obs_prob: f64,
    /// Ascending chains of service-rate symbols, e.g.
    /// `["mu[1][c1]", "mu[2][c1]", "mu[3][c1]"]` for `mu1 <= mu2 <= mu3`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rate_constraints: Vec<Vec<String>>,
    #[serde(default)]
    pub priors: PriorDoc,
}

/// One destination of a routing row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteTarget {
    pub to: StationId,
    pub class: ClassId,
}

/// Categorical routing out of `(from, class)`. Probabilities live in [`Params`].
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRow {
    pub from: StationId,
    pub class: ClassId,
    pub targets: Vec<RouteTarget>,
    pub fixed: bool,
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingRule {
    pub rows: Vec<RoutingRow>,
    index: Vec<Option<usize>>,
    classes: usize,
}

impl RoutingRule {
    pub fn row_index(&self, from: StationId, class: ClassId) -> Option<usize> {
        self.index.get(from * self.classes + class).copied().flatten()
    }
}

/// A service-rate parameter, possibly shared by several `(station, class)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceSymbol {
    pub name: String,
    pub members: Vec<(StationId, ClassId)>,
}

/// Validated network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkSpecDoc", into = "NetworkSpecDoc")]
pub struct NetworkSpec {
    doc: NetworkSpecDoc,
    disciplines: Vec<Discipline>,
    classes: Vec<String>,
    routing: RoutingRule,
    symbols: Vec<ServiceSymbol>,
    symbol_of: Vec<usize>,
    reachable: Vec<bool>,
    symbol_used: Vec<bool>,
    arrival_classes: Vec<ClassId>,
    obs_prob: f64,
    constraints: Vec<(usize, usize)>,
    arrival_priors: Vec<GammaPrior>,
    service_priors: Vec<GammaPrior>,
    declared: Params,
}

impl From<NetworkSpec> for NetworkSpecDoc {
    fn from(spec: NetworkSpec) -> Self {
        spec.doc
    }
}

impl TryFrom<NetworkSpecDoc> for NetworkSpec {
    type Error = ModelError;

    fn try_from(doc: NetworkSpecDoc) -> Result<Self, ModelError> {
        NetworkSpec::from_doc(doc)
    }
}

fn invalid(msg: impl Into<String>) -> ModelError {
    ModelError::InvalidSpec(msg.into())
}

impl NetworkSpec {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let doc: NetworkSpecDoc =
            serde_json::from_str(text).map_err(|e| invalid(format!("malformed JSON: {e}")))?;
        Self::from_doc(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("spec document serializes")
    }

    pub fn doc(&self) -> &NetworkSpecDoc {
        &self.doc
    }

    pub fn from_doc(doc: NetworkSpecDoc) -> Result<Self, ModelError> {
        let m = doc.stations.len();
        if m == 0 {
            return Err(invalid("network needs at least one station"));
        }
        let nc = doc.classes.len();
        if nc == 0 {
            return Err(invalid("network needs at least one class"));
        }
        let mut class_ids = HashMap::new();
        for (c, name) in doc.classes.iter().enumerate() {
            if class_ids.insert(name.clone(), c).is_some() {
                return Err(invalid(format!("duplicate class name {name:?}")));
            }
        }
        let class_id = |name: &str| -> Result<ClassId, ModelError> {
            class_ids
                .get(name)
                .copied()
                .ok_or_else(|| invalid(format!("unknown class {name:?}")))
        };

        if doc.arrival_rates.len() != nc {
            return Err(invalid(format!(
                "arrival_rates has {} entries, expected {nc}",
                doc.arrival_rates.len()
            )));
        }
        if doc.service_rates.len() != m || doc.service_rates.iter().any(|r| r.len() != nc) {
            return Err(invalid(format!("service_rates must be a {m} x {nc} matrix")));
        }
        for (i, row) in doc.service_rates.iter().enumerate() {
            for (c, &mu) in row.iter().enumerate() {
                if !(mu.is_finite() && mu > 0.0) {
                    return Err(invalid(format!(
                        "service rate of class {} at station {} must be positive",
                        doc.classes[c],
                        i + 1
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&doc.obs_prob) {
            return Err(invalid("obs_prob must lie in [0, 1]"));
        }

        // Service-rate symbols, merging shared groups.
        let mut symbol_of = vec![usize::MAX; m * nc];
        let mut symbols: Vec<ServiceSymbol> = Vec::new();
        for group in &doc.shared_service_rates {
            if group.is_empty() {
                continue;
            }
            let idx = symbols.len();
            let mut members = Vec::new();
            for (station, cname) in group {
                if *station == 0 || *station > m {
                    return Err(invalid(format!("shared rate refers to station {station}")));
                }
                let c = class_id(cname)?;
                let slot = &mut symbol_of[(station - 1) * nc + c];
                if *slot != usize::MAX {
                    return Err(invalid(format!("mu[{station}][{cname}] appears in two shared groups")));
                }
                *slot = idx;
                members.push((*station, c));
            }
            let (s0, c0) = members[0];
            let rate0 = doc.service_rates[s0 - 1][c0];
            if members.iter().any(|&(s, c)| doc.service_rates[s - 1][c] != rate0) {
                return Err(invalid(format!(
                    "shared group starting at mu[{s0}][{}] declares unequal rates",
                    doc.classes[c0]
                )));
            }
            symbols.push(ServiceSymbol {
                name: format!("mu[{s0}][{}]", doc.classes[c0]),
                members,
            });
        }
        for i in 1..=m {
            for c in 0..nc {
                if symbol_of[(i - 1) * nc + c] == usize::MAX {
                    symbol_of[(i - 1) * nc + c] = symbols.len();
                    symbols.push(ServiceSymbol {
                        name: format!("mu[{i}][{}]", doc.classes[c]),
                        members: vec![(i, c)],
                    });
                }
            }
        }
        let service_declared: Vec<f64> = symbols
            .iter()
            .map(|s| {
                let (i, c) = s.members[0];
                doc.service_rates[i - 1][c]
            })
            .collect();

        // Routing rows.
        let mut index = vec![None; (m + 1) * nc];
        let mut rows = Vec::new();
        let mut routing_declared = Vec::new();
        for rdoc in &doc.routing {
            let from = rdoc.from;
            if from > m {
                return Err(invalid(format!("routing row from unknown station {from}")));
            }
            let class = class_id(&rdoc.class)?;
            if index[from * nc + class].is_some() {
                return Err(invalid(format!("duplicate routing row ({from}, {})", rdoc.class)));
            }
            if rdoc.entries.is_empty() {
                return Err(invalid(format!("routing row ({from}, {}) is empty", rdoc.class)));
            }
            let mut targets = Vec::new();
            let mut probs = Vec::new();
            let mut seen = HashSet::new();
            for e in &rdoc.entries {
                if e.to > m {
                    return Err(invalid(format!("routing to unknown station {}", e.to)));
                }
                let next = match &e.class {
                    Some(n) => class_id(n)?,
                    None => class,
                };
                if from == 0 && e.to == 0 {
                    return Err(invalid(format!("arrival row for {} routes straight to the exterior", rdoc.class)));
                }
                if from == 0 && next != class {
                    return Err(invalid(format!("arrival row for {} switches class", rdoc.class)));
                }
                if e.to == 0 && next != class {
                    return Err(invalid(format!("exit entry of row ({from}, {}) switches class", rdoc.class)));
                }
                if from != 0 && e.to == from {
                    return Err(invalid(format!(
                        "row ({from}, {}) routes back into the same station; self-transitions are not supported",
                        rdoc.class
                    )));
                }
                if !(e.prob.is_finite() && e.prob >= 0.0) {
                    return Err(invalid(format!("negative routing probability in row ({from}, {})", rdoc.class)));
                }
                if !seen.insert((e.to, next)) {
                    return Err(invalid(format!("duplicate destination in row ({from}, {})", rdoc.class)));
                }
                targets.push(RouteTarget { to: e.to, class: next });
                probs.push(e.prob);
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(invalid(format!(
                    "routing row ({from}, {}) sums to {total}, not 1",
                    rdoc.class
                )));
            }
            let prior = match &rdoc.prior {
                Some(p) => {
                    if p.len() != targets.len() || p.iter().any(|&a| !(a > 0.0)) {
                        return Err(invalid(format!(
                            "routing prior of row ({from}, {}) must have one positive entry per destination",
                            rdoc.class
                        )));
                    }
                    p.clone()
                }
                None => vec![doc.priors.routing_pseudo_count; targets.len()],
            };
            index[from * nc + class] = Some(rows.len());
            rows.push(RoutingRow {
                from,
                class,
                targets,
                fixed: rdoc.fixed,
                prior,
            });
            routing_declared.push(probs);
        }
        if !(doc.priors.routing_pseudo_count > 0.0) {
            return Err(invalid("routing_pseudo_count must be positive"));
        }
        let routing = RoutingRule {
            rows,
            index,
            classes: nc,
        };

        // Classes with an arrival row need a positive rate; the others (reached
        // only by switching) must declare 0.
        let mut arrival_classes = Vec::new();
        for (c, &l) in doc.arrival_rates.iter().enumerate() {
            let has_row = routing.row_index(0, c).is_some();
            if has_row && !(l.is_finite() && l > 0.0) {
                return Err(invalid(format!("arrival rate of class {} must be positive", doc.classes[c])));
            }
            if !has_row && l != 0.0 {
                return Err(invalid(format!(
                    "class {} has an arrival rate but no arrival routing row",
                    doc.classes[c]
                )));
            }
            if has_row {
                arrival_classes.push(c);
            }
        }
        if arrival_classes.is_empty() {
            return Err(invalid("no class has an arrival routing row"));
        }

        // Every (station, class) reachable through declared edges needs a row.
        let mut queue = VecDeque::new();
        let mut reached = HashSet::new();
        for &c in &arrival_classes {
            let r = routing.row_index(0, c).expect("arrival class has a row");
            for t in &routing.rows[r].targets {
                if reached.insert((t.to, t.class)) {
                    queue.push_back((t.to, t.class));
                }
            }
        }
        while let Some((i, c)) = queue.pop_front() {
            if i == 0 {
                continue;
            }
            let r = routing.row_index(i, c).ok_or_else(|| {
                invalid(format!(
                    "class {} can reach station {i} but has no routing row there",
                    doc.classes[c]
                ))
            })?;
            for t in &routing.rows[r].targets {
                if reached.insert((t.to, t.class)) {
                    queue.push_back((t.to, t.class));
                }
            }
        }

        // Order constraints over service symbols.
        let symbol_by_name: HashMap<&str, usize> =
            symbols.iter().enumerate().map(|(k, s)| (s.name.as_str(), k)).collect();
        let mut constraints = Vec::new();
        for chain in &doc.rate_constraints {
            let ids = chain
                .iter()
                .map(|n| {
                    symbol_by_name
                        .get(n.as_str())
                        .copied()
                        .ok_or_else(|| invalid(format!("constraint names unknown service rate {n:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            for w in ids.windows(2) {
                if w[0] == w[1] {
                    return Err(invalid("constraint relates a rate to itself"));
                }
                if !constraints.contains(&(w[0], w[1])) {
                    constraints.push((w[0], w[1]));
                }
            }
        }
        let mut reachable = vec![false; m * nc];
        for &(i, c) in &reached {
            if i > 0 {
                reachable[(i - 1) * nc + c] = true;
            }
        }
        let symbol_used: Vec<bool> = symbols
            .iter()
            .map(|s| s.members.iter().any(|&(i, c)| reachable[(i - 1) * nc + c]))
            .collect();
        if topological_order(symbols.len(), &constraints).is_none() {
            return Err(invalid("rate constraints contain a cycle"));
        }

        // Priors.
        let mut arrival_priors = vec![doc.priors.arrival; nc];
        let mut service_priors = vec![doc.priors.service; symbols.len()];
        for (name, prior) in &doc.priors.overrides {
            if let Some(c) = doc.classes.iter().position(|cn| format!("lambda[{cn}]") == *name) {
                arrival_priors[c] = *prior;
            } else if let Some(&k) = symbol_by_name.get(name.as_str()) {
                service_priors[k] = *prior;
            } else {
                return Err(invalid(format!("prior override for unknown parameter {name:?}")));
            }
        }
        for p in arrival_priors.iter().chain(&service_priors) {
            if !(p.shape > 0.0 && p.rate >= 0.0) {
                return Err(invalid("Gamma priors need shape > 0 and rate >= 0"));
            }
        }

        let declared = Params {
            arrival: doc.arrival_rates.clone(),
            service: service_declared,
            routing: routing_declared,
        };

        Ok(Self {
            disciplines: doc.stations.iter().map(|s| s.discipline).collect(),
            classes: doc.classes.clone(),
            routing,
            symbols,
            symbol_of,
            reachable,
            symbol_used,
            arrival_classes,
            obs_prob: doc.obs_prob,
            constraints,
            arrival_priors,
            service_priors,
            declared,
            doc,
        })
    }

    pub fn station_count(&self) -> usize {
        self.disciplines.len()
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_name(&self, c: ClassId) -> &str {
        &self.classes[c]
    }

    pub fn class_by_name(&self, name: &str) -> Option<ClassId> {
        self.classes.iter().position(|n| n == name)
    }

    /// Discipline of station `i` (1-based).
    pub fn discipline(&self, station: StationId) -> Discipline {
        self.disciplines[station - 1]
    }

    pub fn routing(&self) -> &RoutingRule {
        &self.routing
    }

    pub fn obs_prob(&self) -> f64 {
        self.obs_prob
    }

    pub fn symbols(&self) -> &[ServiceSymbol] {
        &self.symbols
    }

    /// Index into [`Params::service`] for `(station, class)`.
    #[inline]
    pub fn service_symbol(&self, station: StationId, class: ClassId) -> usize {
        self.symbol_of[(station - 1) * self.classes.len() + class]
    }

    #[inline]
    pub fn service_rate(&self, params: &Params, station: StationId, class: ClassId) -> f64 {
        params.service[self.service_symbol(station, class)]
    }

    /// Whether a job of `class` can ever be present at `station`.
    #[inline]
    pub fn is_reachable(&self, station: StationId, class: ClassId) -> bool {
        self.reachable[(station - 1) * self.classes.len() + class]
    }

    /// Whether any `(station, class)` pair using service symbol `k` is reachable.
    pub fn symbol_in_use(&self, k: usize) -> bool {
        self.symbol_used[k]
    }

    /// Classes with external arrivals.
    pub fn arrival_classes(&self) -> &[ClassId] {
        &self.arrival_classes
    }

    /// Order constraints as `(lower, upper)` pairs of service symbols.
    pub fn constraints(&self) -> &[(usize, usize)] {
        &self.constraints
    }

    pub fn arrival_priors(&self) -> &[GammaPrior] {
        &self.arrival_priors
    }

    pub fn service_priors(&self) -> &[GammaPrior] {
        &self.service_priors
    }

    /// Rates and routing probabilities written in the document.
    pub fn declared_params(&self) -> &Params {
        &self.declared
    }

    /// Prior means for rates together with the declared routing.
    pub fn prior_mean_params(&self) -> Params {
        Params {
            arrival: (0..self.classes.len())
                .map(|c| {
                    if self.arrival_classes.contains(&c) {
                        self.arrival_priors[c].mean()
                    } else {
                        0.0
                    }
                })
                .collect(),
            service: self.service_priors.iter().map(GammaPrior::mean).collect(),
            routing: self.declared.routing.clone(),
        }
    }

    /// Copy of this spec with a different observation probability.
    pub fn with_obs_prob(&self, q: f64) -> Result<Self, ModelError> {
        let mut doc = self.doc.clone();
        doc.obs_prob = q;
        Self::from_doc(doc)
    }

    /// Copy of this spec whose declared parameters are `params`.
    pub fn with_declared(&self, params: &Params) -> Result<Self, ModelError> {
        params.check_shape(self)?;
        let mut doc = self.doc.clone();
        doc.arrival_rates = params.arrival.clone();
        for (k, sym) in self.symbols.iter().enumerate() {
            for &(i, c) in &sym.members {
                doc.service_rates[i - 1][c] = params.service[k];
            }
        }
        for (r, row) in self.routing.rows.iter().enumerate() {
            let di = doc
                .routing
                .iter()
                .position(|d| d.from == row.from && self.class_by_name(&d.class) == Some(row.class))
                .expect("row exists in document");
            for (e, p) in doc.routing[di].entries.iter_mut().zip(&params.routing[r]) {
                e.prob = *p;
            }
        }
        Self::from_doc(doc)
    }

    /// Names of the sampled parameters, in the column order of [`Self::flatten`].
    ///
    /// Excluded: arrival rates of classes without external arrivals, service
    /// rates no job can ever use, and routing rows that are fixed or have a
    /// single destination.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .arrival_classes
            .iter()
            .map(|&c| format!("lambda[{}]", self.classes[c]))
            .collect();
        names.extend(
            self.symbols
                .iter()
                .enumerate()
                .filter(|(k, _)| self.symbol_used[*k])
                .map(|(_, s)| s.name.clone()),
        );
        for row in self.free_rows() {
            for t in &row.targets {
                names.push(format!(
                    "P[{}][{}][{}][{}]",
                    row.from, self.classes[row.class], t.to, self.classes[t.class]
                ));
            }
        }
        names
    }

    pub fn flatten(&self, params: &Params) -> Vec<f64> {
        let mut out: Vec<f64> = self.arrival_classes.iter().map(|&c| params.arrival[c]).collect();
        out.extend(
            params
                .service
                .iter()
                .enumerate()
                .filter(|(k, _)| self.symbol_used[*k])
                .map(|(_, v)| *v),
        );
        for (r, row) in self.routing.rows.iter().enumerate() {
            if is_free(row) {
                out.extend_from_slice(&params.routing[r]);
            }
        }
        out
    }

    /// Inverse of [`Self::flatten`]: parts not in `flat` are taken from `base`.
    pub fn unflatten(&self, flat: &[f64], base: &Params) -> Result<Params, ModelError> {
        let want = self.parameter_names().len();
        if flat.len() != want {
            return Err(ModelError::InvalidParams(format!("expected {want} values, got {}", flat.len())));
        }
        let mut p = base.clone();
        let mut it = flat.iter().copied();
        for &c in &self.arrival_classes {
            p.arrival[c] = it.next().expect("length checked");
        }
        for k in 0..self.symbols.len() {
            if self.symbol_used[k] {
                p.service[k] = it.next().expect("length checked");
            }
        }
        for (r, row) in self.routing.rows.iter().enumerate() {
            if is_free(row) {
                for v in p.routing[r].iter_mut() {
                    *v = it.next().expect("length checked");
                }
            }
        }
        Ok(p)
    }

    fn free_rows(&self) -> impl Iterator<Item = &RoutingRow> {
        self.routing.rows.iter().filter(|r| is_free(r))
    }

    /// Stable digest of the document, used to tag checkpoints.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(&self.doc).expect("spec document serializes");
        let mut h = Sha256::new();
        h.update(&bytes);
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn is_free(row: &RoutingRow) -> bool {
    !row.fixed && row.targets.len() > 1
}

/// Kahn ordering of `n` nodes under `(lower, upper)` edges, or `None` on a cycle.
pub(crate) fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    for &(_, b) in edges {
        indeg[b] += 1;
    }
    let mut ready: VecDeque<usize> = (0..n).filter(|&k| indeg[k] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(k) = ready.pop_front() {
        order.push(k);
        for &(a, b) in edges {
            if a == k {
                indeg[b] -= 1;
                if indeg[b] == 0 {
                    ready.push_back(b);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}
