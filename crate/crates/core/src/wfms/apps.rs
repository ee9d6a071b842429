use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::{Map, Value};

type Binding = Arc<dyn Fn(&Map<String, Value>) -> Result<Map<String, Value>, String> + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvokeError {
    #[error("no binding for application `{0}`")]
    NoBinding(String),
    #[error("application `{application}` failed: {detail}")]
    ApplicationFault { application: String, detail: String },
}

impl InvokeError {
    pub fn code(&self) -> &'static str {
        match self {
            InvokeError::NoBinding(_) => "NoBinding",
            InvokeError::ApplicationFault { .. } => "ApplicationFault",
        }
    }
}

/// Interface 3 bindings: named synchronous functions over instance variables.
#[derive(Clone, Default)]
pub struct ApplicationRegistry {
    bindings: BTreeMap<String, Binding>,
}

impl fmt::Debug for ApplicationRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.bindings.keys()).finish()
    }
}

impl ApplicationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind<F>(&mut self, name: &str, f: F)
    where
        F: Fn(&Map<String, Value>) -> Result<Map<String, Value>, String> + Send + Sync + 'static,
    {
        self.bindings.insert(name.to_string(), Arc::new(f));
    }

    pub fn names(&self) -> Vec<String> {
        self.bindings.keys().cloned().collect()
    }

    pub fn invoke(&self, application: &str, payload: &Map<String, Value>) -> Result<Map<String, Value>, InvokeError> {
        let binding = self
            .bindings
            .get(application)
            .ok_or_else(|| InvokeError::NoBinding(application.to_string()))?;
        binding(payload).map_err(|detail| InvokeError::ApplicationFault {
            application: application.to_string(),
            detail,
        })
    }

    /// Bindings used by the shipped demo processes.
    pub fn demo() -> Self {
        let mut r = Self::new();
        r.bind("record-vitals", |vars| {
            let mut out = Map::new();
            out.insert("vitals_recorded".into(), Value::Bool(true));
            if let Some(p) = vars.get("patient_id") {
                out.insert("vitals_patient".into(), p.clone());
            }
            Ok(out)
        });
        r.bind("always-fails", |_| Err("simulated application failure".into()));
        r
    }
}
