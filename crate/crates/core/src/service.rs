//! Boolean-register services.
//!
//! A service family maps names to single-bit registers. Every service is
//! either a *target* (external, its actions are the point of running a
//! program) or a *co-target* (local scratch, re-initialized before each run).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building interfaces or applying basic actions.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("unknown service '{0}'")]
    UnknownService(String),
    #[error("unknown method '{method}' for service '{service}'")]
    UnknownMethod { service: String, method: String },
    #[error("service '{0}' declares no methods")]
    NoMethods(String),
    #[error("service '{0}' declared twice")]
    DuplicateService(String),
    #[error("'{0}' is not a valid service name")]
    InvalidName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    Target,
    Cotarget,
}

impl ServiceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::Target => "target",
            ServiceKind::Cotarget => "cotarget",
        }
    }
}

/// The three register methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "get")]
    Get,
    #[serde(rename = "set:t")]
    SetTrue,
    #[serde(rename = "set:f")]
    SetFalse,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Get, Method::SetTrue, Method::SetFalse];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "get",
            Method::SetTrue => "set:t",
            Method::SetFalse => "set:f",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "get" => Ok(Method::Get),
            "set:t" => Ok(Method::SetTrue),
            "set:f" => Ok(Method::SetFalse),
            _ => Err(()),
        }
    }
}

/// Reply produced by a basic action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reply(pub bool);

/// True for tokens over `[a-z0-9:_]` (the focus/method alphabet minus the dot).
pub fn is_name_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b':' || b == b'_')
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDecl {
    pub name: Arc<str>,
    pub kind: ServiceKind,
    /// Sorted, deduplicated, never empty.
    pub methods: Vec<Method>,
}

impl ServiceDecl {
    pub fn supports(&self, method: Method) -> bool {
        self.methods.contains(&method)
    }
}

/// Declared services, kept sorted by name so indices are stable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterfaceSpec {
    services: Vec<ServiceDecl>,
}

impl InterfaceSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder form of [`InterfaceSpec::insert`] with the full method set.
    pub fn with(mut self, name: &str, kind: ServiceKind) -> Result<Self, ServiceError> {
        self.insert(name, kind, &Method::ALL)?;
        Ok(self)
    }

    pub fn insert(
        &mut self,
        name: &str,
        kind: ServiceKind,
        methods: &[Method],
    ) -> Result<(), ServiceError> {
        if !is_name_token(name) {
            return Err(ServiceError::InvalidName(name.to_string()));
        }
        if methods.is_empty() {
            return Err(ServiceError::NoMethods(name.to_string()));
        }
        let at = match self.services.binary_search_by(|s| (*s.name).cmp(name)) {
            Ok(_) => return Err(ServiceError::DuplicateService(name.to_string())),
            Err(at) => at,
        };
        let mut methods = methods.to_vec();
        methods.sort();
        methods.dedup();
        self.services.insert(
            at,
            ServiceDecl {
                name: Arc::from(name),
                kind,
                methods,
            },
        );
        Ok(())
    }

    pub fn services(&self) -> &[ServiceDecl] {
        &self.services
    }

    pub fn len(&self) -> usize {
        self.services.len()
    }

    pub fn is_empty(&self) -> bool {
        self.services.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.services.binary_search_by(|s| (*s.name).cmp(name)).ok()
    }

    pub fn get(&self, name: &str) -> Option<&ServiceDecl> {
        self.index_of(name).map(|i| &self.services[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index_of(name).is_some()
    }

    pub fn kind_of(&self, name: &str) -> Option<ServiceKind> {
        self.get(name).map(|s| s.kind)
    }

    /// Adds every service of `other`; a name present in both is an error.
    pub fn union(&self, other: &InterfaceSpec) -> Result<InterfaceSpec, ServiceError> {
        let mut out = self.clone();
        for s in &other.services {
            out.insert(&s.name, s.kind, &s.methods)?;
        }
        Ok(out)
    }
}

/// A named collection of boolean registers over an [`InterfaceSpec`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceFamily {
    iface: Arc<InterfaceSpec>,
    state: Vec<bool>,
    initial: Vec<bool>,
}

/// Build a family; services missing from `init` start out false.
pub fn make_family(
    spec: InterfaceSpec,
    init: &BTreeMap<String, bool>,
) -> Result<ServiceFamily, ServiceError> {
    ServiceFamily::new(Arc::new(spec), init)
}

impl ServiceFamily {
    pub fn new(
        iface: Arc<InterfaceSpec>,
        init: &BTreeMap<String, bool>,
    ) -> Result<ServiceFamily, ServiceError> {
        let mut state = vec![false; iface.len()];
        for (name, &v) in init {
            let i = iface
                .index_of(name)
                .ok_or_else(|| ServiceError::UnknownService(name.clone()))?;
            state[i] = v;
        }
        Ok(ServiceFamily {
            iface,
            initial: state.clone(),
            state,
        })
    }

    /// Family whose current and initial contents are `bits` (in interface order).
    pub fn from_bits(iface: Arc<InterfaceSpec>, bits: Vec<bool>) -> ServiceFamily {
        assert_eq!(bits.len(), iface.len(), "one bit per service");
        ServiceFamily {
            iface,
            initial: bits.clone(),
            state: bits,
        }
    }

    pub(crate) fn from_parts(
        iface: Arc<InterfaceSpec>,
        state: Vec<bool>,
        initial: Vec<bool>,
    ) -> ServiceFamily {
        debug_assert_eq!(state.len(), iface.len());
        debug_assert_eq!(initial.len(), iface.len());
        ServiceFamily {
            iface,
            state,
            initial,
        }
    }

    pub fn iface(&self) -> &InterfaceSpec {
        &self.iface
    }

    pub fn iface_arc(&self) -> &Arc<InterfaceSpec> {
        &self.iface
    }

    pub fn bits(&self) -> &[bool] {
        &self.state
    }

    pub fn initial_bits(&self) -> &[bool] {
        &self.initial
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        self.iface.index_of(name).map(|i| self.state[i])
    }

    pub fn initial(&self, name: &str) -> Option<bool> {
        self.iface.index_of(name).map(|i| self.initial[i])
    }

    pub fn state_map(&self) -> BTreeMap<String, bool> {
        self.iface
            .services()
            .iter()
            .zip(&self.state)
            .map(|(s, &v)| (s.name.to_string(), v))
            .collect()
    }

    pub fn initial_map(&self) -> BTreeMap<String, bool> {
        self.iface
            .services()
            .iter()
            .zip(&self.initial)
            .map(|(s, &v)| (s.name.to_string(), v))
            .collect()
    }

    /// Same registers, with `value` as both current and initial content of `name`.
    pub fn with_value(&self, name: &str, value: bool) -> Result<ServiceFamily, ServiceError> {
        let i = self
            .iface
            .index_of(name)
            .ok_or_else(|| ServiceError::UnknownService(name.to_string()))?;
        let mut out = self.clone();
        out.state[i] = value;
        out.initial[i] = value;
        Ok(out)
    }

    /// Performs one basic action. `get` replies the contents; `set:b` stores
    /// and replies `b`.
    pub fn apply_action(
        &self,
        focus: &str,
        method: &str,
    ) -> Result<(Reply, ServiceFamily), ServiceError> {
        let mut next = self.clone();
        let reply = next.apply_in_place(focus, method)?;
        Ok((reply, next))
    }

    pub(crate) fn apply_in_place(&mut self, focus: &str, method: &str) -> Result<Reply, ServiceError> {
        let i = self
            .iface
            .index_of(focus)
            .ok_or_else(|| ServiceError::UnknownService(focus.to_string()))?;
        let m = method
            .parse::<Method>()
            .ok()
            .filter(|m| self.iface.services()[i].supports(*m))
            .ok_or_else(|| ServiceError::UnknownMethod {
                service: focus.to_string(),
                method: method.to_string(),
            })?;
        Ok(Reply(register_step(&mut self.state[i], m)))
    }

    /// Restores co-target registers to their initial contents.
    pub fn reset_cotargets(&self) -> ServiceFamily {
        let mut out = self.clone();
        for (i, s) in self.iface.services().iter().enumerate() {
            if s.kind == ServiceKind::Cotarget {
                out.state[i] = out.initial[i];
            }
        }
        out
    }
}

/// Register semantics shared by every engine.
#[inline]
pub(crate) fn register_step(cell: &mut bool, method: Method) -> bool {
    match method {
        Method::Get => *cell,
        Method::SetTrue => {
            *cell = true;
            true
        }
        Method::SetFalse => {
            *cell = false;
            false
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ServiceEntry {
    kind: ServiceKind,
    methods: Vec<Method>,
}

impl Serialize for InterfaceSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<&str, ServiceEntry> = self
            .services
            .iter()
            .map(|s| {
                (
                    &*s.name,
                    ServiceEntry {
                        kind: s.kind,
                        methods: s.methods.clone(),
                    },
                )
            })
            .collect();
        map.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for InterfaceSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, ServiceEntry>::deserialize(de)?;
        let mut iface = InterfaceSpec::new();
        for (name, entry) in map {
            iface
                .insert(&name, entry.kind, &entry.methods)
                .map_err(serde::de::Error::custom)?;
        }
        Ok(iface)
    }
}

/// On-disk `.fam.json` layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFile {
    services: InterfaceSpec,
    #[serde(default)]
    init: BTreeMap<String, bool>,
}

#[derive(Debug, Error)]
pub enum FamilyFileError {
    #[error("malformed family file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl FamilyFile {
    pub fn from_family(fam: &ServiceFamily) -> FamilyFile {
        FamilyFile {
            services: fam.iface().clone(),
            init: fam.initial_map(),
        }
    }

    pub fn parse(text: &str) -> Result<ServiceFamily, FamilyFileError> {
        let file: FamilyFile = serde_json::from_str(text)?;
        file.into_family()
    }

    pub fn into_family(self) -> Result<ServiceFamily, FamilyFileError> {
        Ok(make_family(self.services, &self.init)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("family files always serialize")
    }
}
