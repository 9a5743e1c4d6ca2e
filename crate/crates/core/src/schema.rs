//! Feature schema, user profiles, actions and interventions.
//!
//! A [`FeatureSet`] fixes the feature space: every feature is either numeric
//! on a finite step grid or categorical over an ordered option list, and is
//! flagged actionable or not. Profiles, actions and interventions are plain
//! values validated against a schema; all operations here are pure.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const STEP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SchemaError {
    #[error("malformed schema document: {0}")]
    Malformed(String),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("feature `{0}`: numeric min must be strictly below max")]
    InvalidRange(String),
    #[error("feature `{0}`: step must be positive and finite")]
    InvalidStep(String),
    #[error("feature `{0}`: step does not divide the range")]
    MisalignedStep(String),
    #[error("feature `{0}`: empty option list")]
    EmptyOptions(String),
    #[error("feature `{0}`: categorical features need at least two options")]
    TooFewOptions(String),
    #[error("feature `{feature}`: duplicate option `{option}`")]
    DuplicateOption { feature: String, option: String },
    #[error("feature `{feature}`: unknown kind `{kind}`")]
    UnknownKind { feature: String, kind: String },
    #[error("feature `{feature}`: missing field `{field}`")]
    MissingField { feature: String, field: &'static str },
    #[error("schema has no actionable feature")]
    NoActionableFeature,
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("profile has no value for feature `{0}`")]
    MissingValue(String),
    #[error("feature `{feature}`: value {value} outside its domain")]
    OutOfDomain { feature: String, value: String },
    #[error("feature `{0}` is not actionable")]
    NotActionable(String),
    #[error("action on `{0}` does not change its current value")]
    NoOpAction(String),
    #[error("intervention modifies feature `{0}` more than once")]
    DuplicateActionFeature(String),
    #[error("action {index}: {source}")]
    ActionFailed {
        index: usize,
        #[source]
        source: Box<SchemaError>,
    },
}

/// A feature value: a number on the feature's grid or a categorical label.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Num(f64),
    Cat(String),
}

impl Value {
    pub fn as_num(&self) -> Option<f64> {
        match self {
            Value::Num(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_cat(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            Value::Num(_) => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits(),
            (Value::Cat(a), Value::Cat(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Num(v) => {
                0u8.hash(state);
                v.to_bits().hash(state);
            }
            Value::Cat(s) => {
                1u8.hash(state);
                s.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(v) => write!(f, "{v}"),
            Value::Cat(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Num(v)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Cat(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric {
        min: f64,
        max: f64,
        step: f64,
        unit: String,
    },
    Categorical {
        options: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub display_name: String,
    pub kind: FeatureKind,
    pub actionable: bool,
}

impl FeatureSpec {
    pub fn is_numeric(&self) -> bool {
        matches!(self.kind, FeatureKind::Numeric { .. })
    }

    /// Number of distinct values in the feature's domain.
    pub fn domain_len(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric { min, max, step, .. } => ((max - min) / step).round() as usize + 1,
            FeatureKind::Categorical { options } => options.len(),
        }
    }

    /// The `k`-th grid value of a numeric feature. The last grid point is `max` exactly.
    pub fn grid_value(&self, k: usize) -> Option<f64> {
        match &self.kind {
            FeatureKind::Numeric { min, max, step, .. } => {
                let last = self.domain_len() - 1;
                match k.cmp(&last) {
                    std::cmp::Ordering::Less => Some(min + k as f64 * step),
                    std::cmp::Ordering::Equal => Some(*max),
                    std::cmp::Ordering::Greater => None,
                }
            }
            FeatureKind::Categorical { .. } => None,
        }
    }

    /// Grid index nearest to `v`, ties toward `min`, clamped to the domain.
    pub fn snap_index(&self, v: f64) -> Option<usize> {
        match &self.kind {
            FeatureKind::Numeric { min, step, .. } => {
                let last = self.domain_len() - 1;
                let t = ((v - min) / step).max(0.0);
                let floor = t.floor();
                let k = if t - floor > 0.5 + STEP_TOLERANCE { floor + 1.0 } else { floor };
                Some((k as usize).min(last))
            }
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn snap(&self, v: f64) -> Option<f64> {
        self.snap_index(v).and_then(|k| self.grid_value(k))
    }

    /// Grid index of a numeric value, if it lies on the grid.
    pub fn grid_index(&self, v: f64) -> Option<usize> {
        let FeatureKind::Numeric { min, max, step, .. } = &self.kind else {
            return None;
        };
        if !v.is_finite() || v < *min - STEP_TOLERANCE * step || v > *max + STEP_TOLERANCE * step {
            return None;
        }
        let t = (v - min) / step;
        let k = t.round();
        if (t - k).abs() > STEP_TOLERANCE * t.abs().max(1.0) {
            return None;
        }
        Some(k as usize)
    }

    pub fn option_index(&self, label: &str) -> Option<usize> {
        match &self.kind {
            FeatureKind::Categorical { options } => options.iter().position(|o| o == label),
            FeatureKind::Numeric { .. } => None,
        }
    }

    /// The domain's own representation of `value` (numerics mapped to exact grid points).
    pub fn canonical(&self, value: &Value) -> Option<Value> {
        match value {
            Value::Num(v) => self.grid_index(*v).and_then(|k| self.grid_value(k)).map(Value::Num),
            Value::Cat(s) => self.option_index(s).map(|_| value.clone()),
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match value {
            Value::Num(v) => self.grid_index(*v).is_some(),
            Value::Cat(s) => self.option_index(s).is_some(),
        }
    }

    /// All domain values in ascending grid / option order.
    pub fn domain(&self) -> Vec<Value> {
        match &self.kind {
            FeatureKind::Numeric { .. } => (0..self.domain_len())
                .filter_map(|k| self.grid_value(k))
                .map(Value::Num)
                .collect(),
            FeatureKind::Categorical { options } => options.iter().map(|o| Value::Cat(o.clone())).collect(),
        }
    }

    pub fn encoded_width(&self) -> usize {
        match &self.kind {
            FeatureKind::Numeric { .. } => 1,
            FeatureKind::Categorical { options } => options.len(),
        }
    }

    /// Writes this feature's encoding of `value` into `out` (length `encoded_width`).
    pub fn encode_value(&self, value: &Value, out: &mut [f64]) -> Result<(), SchemaError> {
        let out_of_domain = || SchemaError::OutOfDomain {
            feature: self.name.clone(),
            value: value.to_string(),
        };
        match (&self.kind, value) {
            (FeatureKind::Numeric { min, max, .. }, Value::Num(v)) => {
                if self.grid_index(*v).is_none() {
                    return Err(out_of_domain());
                }
                out[0] = (v - min) / (max - min);
            }
            (FeatureKind::Categorical { .. }, Value::Cat(s)) => {
                let idx = self.option_index(s).ok_or_else(out_of_domain)?;
                out.iter_mut().for_each(|o| *o = 0.0);
                out[idx] = 1.0;
            }
            _ => return Err(out_of_domain()),
        }
        Ok(())
    }

    /// Span used to normalize numeric effort.
    pub fn span(&self) -> Option<f64> {
        match &self.kind {
            FeatureKind::Numeric { min, max, .. } => Some(max - min),
            FeatureKind::Categorical { .. } => None,
        }
    }
}

/// Serialized form of a schema file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaDocument {
    #[serde(default)]
    pub version: String,
    pub features: Vec<FeatureEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub actionable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

impl FeatureEntry {
    fn into_spec(self) -> Result<FeatureSpec, SchemaError> {
        let name = self.name;
        let missing = |field| SchemaError::MissingField {
            feature: name.clone(),
            field,
        };
        let kind = match self.kind.as_str() {
            "numeric" => {
                let min = self.min.ok_or_else(|| missing("min"))?;
                let max = self.max.ok_or_else(|| missing("max"))?;
                let step = self.step.ok_or_else(|| missing("step"))?;
                if !(min.is_finite() && max.is_finite()) || min >= max {
                    return Err(SchemaError::InvalidRange(name));
                }
                if !(step.is_finite() && step > 0.0) {
                    return Err(SchemaError::InvalidStep(name));
                }
                let n = (max - min) / step;
                if (n - n.round()).abs() > STEP_TOLERANCE * n.max(1.0) || n.round() < 1.0 {
                    return Err(SchemaError::MisalignedStep(name));
                }
                FeatureKind::Numeric {
                    min,
                    max,
                    step,
                    unit: self.unit.unwrap_or_default(),
                }
            }
            "categorical" => {
                let options = self.options.ok_or_else(|| missing("options"))?;
                if options.is_empty() {
                    return Err(SchemaError::EmptyOptions(name));
                }
                if options.len() < 2 {
                    return Err(SchemaError::TooFewOptions(name));
                }
                for (i, o) in options.iter().enumerate() {
                    if options[..i].contains(o) {
                        return Err(SchemaError::DuplicateOption {
                            feature: name,
                            option: o.clone(),
                        });
                    }
                }
                FeatureKind::Categorical { options }
            }
            other => {
                return Err(SchemaError::UnknownKind {
                    feature: name,
                    kind: other.to_owned(),
                })
            }
        };
        Ok(FeatureSpec {
            display_name: self.display_name.unwrap_or_else(|| name.clone()),
            name,
            kind,
            actionable: self.actionable,
        })
    }
}

impl From<&FeatureSpec> for FeatureEntry {
    fn from(spec: &FeatureSpec) -> Self {
        let mut entry = FeatureEntry {
            name: spec.name.clone(),
            display_name: Some(spec.display_name.clone()),
            kind: String::new(),
            actionable: spec.actionable,
            min: None,
            max: None,
            step: None,
            unit: None,
            options: None,
        };
        match &spec.kind {
            FeatureKind::Numeric { min, max, step, unit } => {
                entry.kind = "numeric".into();
                entry.min = Some(*min);
                entry.max = Some(*max);
                entry.step = Some(*step);
                entry.unit = Some(unit.clone());
            }
            FeatureKind::Categorical { options } => {
                entry.kind = "categorical".into();
                entry.options = Some(options.clone());
            }
        }
        entry
    }
}

/// An ordered, validated feature schema. Feature order is the encoding order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "SchemaDocument", into = "SchemaDocument")]
pub struct FeatureSet {
    version: String,
    features: Vec<FeatureSpec>,
    index: HashMap<String, usize>,
    offsets: Vec<usize>,
    encoded_len: usize,
    actionable: Vec<usize>,
}

impl PartialEq for FeatureSet {
    fn eq(&self, other: &Self) -> bool {
        self.version == other.version && self.features == other.features
    }
}

impl TryFrom<SchemaDocument> for FeatureSet {
    type Error = SchemaError;

    fn try_from(doc: SchemaDocument) -> Result<Self, Self::Error> {
        let features = doc
            .features
            .into_iter()
            .map(FeatureEntry::into_spec)
            .collect::<Result<Vec<_>, _>>()?;
        FeatureSet::new(doc.version, features)
    }
}

impl From<FeatureSet> for SchemaDocument {
    fn from(set: FeatureSet) -> Self {
        SchemaDocument {
            version: set.version.clone(),
            features: set.features.iter().map(FeatureEntry::from).collect(),
        }
    }
}

/// Parses a JSON schema document.
pub fn parse_schema(text: &str) -> Result<FeatureSet, SchemaError> {
    let doc: SchemaDocument = serde_json::from_str(text).map_err(|e| SchemaError::Malformed(e.to_string()))?;
    FeatureSet::try_from(doc)
}

impl FeatureSet {
    pub fn new(version: impl Into<String>, features: Vec<FeatureSpec>) -> Result<Self, SchemaError> {
        let mut index = HashMap::with_capacity(features.len());
        let mut offsets = Vec::with_capacity(features.len());
        let mut encoded_len = 0;
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.name.clone(), i).is_some() {
                return Err(SchemaError::DuplicateFeature(f.name.clone()));
            }
            offsets.push(encoded_len);
            encoded_len += f.encoded_width();
        }
        let actionable: Vec<usize> = (0..features.len()).filter(|&i| features[i].actionable).collect();
        if actionable.is_empty() {
            return Err(SchemaError::NoActionableFeature);
        }
        Ok(FeatureSet {
            version: version.into(),
            features,
            index,
            offsets,
            encoded_len,
            actionable,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureSpec> {
        self.index_of(name).map(|i| &self.features[i])
    }

    /// Schema indices of actionable features, in schema order.
    pub fn actionable_indices(&self) -> &[usize] {
        &self.actionable
    }

    pub fn actionable_count(&self) -> usize {
        self.actionable.len()
    }

    /// Position of a feature among the actionable features.
    pub fn actionable_position(&self, name: &str) -> Option<usize> {
        let idx = self.index_of(name)?;
        self.actionable.binary_search(&idx).ok()
    }

    pub fn actionable_names(&self) -> impl Iterator<Item = &str> {
        self.actionable.iter().map(|&i| self.features[i].name.as_str())
    }

    pub fn encoded_len(&self) -> usize {
        self.encoded_len
    }

    /// Offset of feature `i`'s block in the encoded vector.
    pub fn encoded_offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    /// Min–max scaled numerics and one-hot categoricals, concatenated in schema order.
    pub fn encode(&self, profile: &UserProfile) -> Result<Vec<f64>, SchemaError> {
        let mut out = vec![0.0; self.encoded_len];
        for (i, f) in self.features.iter().enumerate() {
            let value = profile
                .get(&f.name)
                .ok_or_else(|| SchemaError::MissingValue(f.name.clone()))?;
            let start = self.offsets[i];
            f.encode_value(value, &mut out[start..start + f.encoded_width()])?;
        }
        Ok(out)
    }

    /// Checks that `profile` holds exactly one in-domain value per feature.
    pub fn validate_profile(&self, profile: &UserProfile) -> Result<(), SchemaError> {
        for name in profile.values.keys() {
            if self.index_of(name).is_none() {
                return Err(SchemaError::UnknownFeature(name.clone()));
            }
        }
        for f in &self.features {
            let v = profile
                .get(&f.name)
                .ok_or_else(|| SchemaError::MissingValue(f.name.clone()))?;
            if !f.contains(v) {
                return Err(SchemaError::OutOfDomain {
                    feature: f.name.clone(),
                    value: v.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Validates `a` against `x` and returns its canonical target value.
    fn check_action(&self, x: &UserProfile, a: &Action) -> Result<Value, SchemaError> {
        let spec = self
            .feature(&a.feature)
            .ok_or_else(|| SchemaError::UnknownFeature(a.feature.clone()))?;
        if !spec.actionable {
            return Err(SchemaError::NotActionable(a.feature.clone()));
        }
        let target = spec.canonical(&a.target).ok_or_else(|| SchemaError::OutOfDomain {
            feature: a.feature.clone(),
            value: a.target.to_string(),
        })?;
        if x.get(&a.feature) == Some(&target) {
            return Err(SchemaError::NoOpAction(a.feature.clone()));
        }
        Ok(target)
    }

    /// Returns `x` with `a.feature` set to `a.target`.
    pub fn apply_action(&self, x: &UserProfile, a: &Action) -> Result<UserProfile, SchemaError> {
        let target = self.check_action(x, a)?;
        let mut next = x.clone();
        next.values.insert(a.feature.clone(), target);
        Ok(next)
    }

    /// Applies the actions left to right.
    pub fn apply_intervention(&self, intervention: &Intervention, x: &UserProfile) -> Result<UserProfile, SchemaError> {
        intervention.check_distinct()?;
        let mut current = x.clone();
        for (index, a) in intervention.actions.iter().enumerate() {
            let target = self.check_action(&current, a).map_err(|e| SchemaError::ActionFailed {
                index,
                source: Box::new(e),
            })?;
            current.values.insert(a.feature.clone(), target);
        }
        Ok(current)
    }
}

/// One value per feature, keyed by feature name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct UserProfile {
    values: BTreeMap<String, Value>,
}

impl UserProfile {
    /// Builds a profile and validates it against `schema`. Numeric values are
    /// stored as the schema's exact grid points.
    pub fn new(values: BTreeMap<String, Value>, schema: &FeatureSet) -> Result<Self, SchemaError> {
        let mut profile = UserProfile { values };
        schema.validate_profile(&profile)?;
        for (name, v) in profile.values.iter_mut() {
            if let Some(c) = schema.feature(name).and_then(|f| f.canonical(v)) {
                *v = c;
            }
        }
        Ok(profile)
    }

    /// Like [`UserProfile::new`] but snaps in-range numeric values to the grid first.
    pub fn snapped(mut values: BTreeMap<String, Value>, schema: &FeatureSet) -> Result<Self, SchemaError> {
        for (name, v) in values.iter_mut() {
            let Some(spec) = schema.feature(name) else { continue };
            if let (FeatureKind::Numeric { min, max, .. }, Value::Num(x)) = (&spec.kind, &*v) {
                if x.is_finite() && *x >= *min && *x <= *max {
                    *v = Value::Num(spec.snap(*x).expect("numeric feature"));
                }
            }
        }
        Self::new(values, schema)
    }

    /// Unvalidated constructor; callers must validate before use.
    pub fn from_map_unchecked(values: BTreeMap<String, Value>) -> Self {
        UserProfile { values }
    }

    pub fn get(&self, feature: &str) -> Option<&Value> {
        self.values.get(feature)
    }

    pub fn values(&self) -> &BTreeMap<String, Value> {
        &self.values
    }

    pub fn into_values(self) -> BTreeMap<String, Value> {
        self.values
    }
}

/// A change of one actionable feature to a new value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub feature: String,
    pub target: Value,
}

impl Action {
    pub fn new(feature: impl Into<String>, target: impl Into<Value>) -> Self {
        Action {
            feature: feature.into(),
            target: target.into(),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.feature, self.target)
    }
}

/// Ordered actions on pairwise distinct features.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "Vec<Action>", into = "Vec<Action>")]
pub struct Intervention {
    actions: Vec<Action>,
}

impl TryFrom<Vec<Action>> for Intervention {
    type Error = SchemaError;

    fn try_from(actions: Vec<Action>) -> Result<Self, Self::Error> {
        Intervention::new(actions)
    }
}

impl From<Intervention> for Vec<Action> {
    fn from(i: Intervention) -> Self {
        i.actions
    }
}

impl Intervention {
    pub fn new(actions: Vec<Action>) -> Result<Self, SchemaError> {
        let i = Intervention { actions };
        i.check_distinct()?;
        Ok(i)
    }

    pub fn empty() -> Self {
        Intervention::default()
    }

    fn check_distinct(&self) -> Result<(), SchemaError> {
        for (i, a) in self.actions.iter().enumerate() {
            if self.actions[..i].iter().any(|b| b.feature == a.feature) {
                return Err(SchemaError::DuplicateActionFeature(a.feature.clone()));
            }
        }
        Ok(())
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn touches(&self, feature: &str) -> bool {
        self.actions.iter().any(|a| a.feature == feature)
    }

    pub fn features(&self) -> impl Iterator<Item = &str> {
        self.actions.iter().map(|a| a.feature.as_str())
    }

    /// Same actions sorted by schema order; unknown features sort last by name.
    pub fn canonical(&self, schema: &FeatureSet) -> Intervention {
        let mut actions = self.actions.clone();
        actions.sort_by(|a, b| {
            let ka = (schema.index_of(&a.feature).unwrap_or(usize::MAX), &a.feature);
            let kb = (schema.index_of(&b.feature).unwrap_or(usize::MAX), &b.feature);
            ka.cmp(&kb)
        });
        Intervention { actions }
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, a) in self.actions.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{a}")?;
        }
        f.write_str("]")
    }
}
