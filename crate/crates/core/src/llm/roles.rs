use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::provider::ProviderRegistry;
use super::types::{ModelRole, Pricing, RoleName};

pub const DEFAULT_PROVIDER: &str = "openai";

/// Default model per role.
pub fn default_model(role: RoleName) -> &'static str {
    match role {
        RoleName::KnowledgeBuilder => "o4-mini",
        RoleName::PrereqDeveloper => "o4-mini",
        RoleName::SetupDeveloper => "o4-mini",
        RoleName::SetupCritic => "o3",
        RoleName::ExploitDeveloper => "o3",
        RoleName::ExploitCritic => "o4-mini",
        RoleName::VerifierDeveloper => "o3",
        RoleName::VerifierCritic => "o3",
        RoleName::FormatCorrector => "gpt-4o-mini",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleOverride {
    #[serde(default)]
    pub provider: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
}

/// The `[models]` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsConfig {
    /// When false every role must be bound explicitly.
    #[serde(default = "default_true")]
    pub inherit_defaults: bool,
    #[serde(flatten)]
    pub roles: BTreeMap<String, RoleOverride>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            inherit_defaults: true,
            roles: BTreeMap::new(),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BindingError {
    #[error("no model bound for role {0}")]
    MissingRole(RoleName),
    #[error("unknown role in configuration: {0}")]
    UnknownRole(String),
    #[error("role {role} uses unknown provider {provider:?}")]
    UnknownProvider { role: RoleName, provider: String },
    #[error("no pricing configured for model {0:?}")]
    MissingPricing(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoleBindings {
    bindings: BTreeMap<RoleName, ModelRole>,
}

impl RoleBindings {
    pub fn get(&self, role: RoleName) -> &ModelRole {
        &self.bindings[&role]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModelRole> {
        self.bindings.values()
    }

    /// Same provider, model and pricing for every role.
    pub fn uniform(provider: &str, model_id: &str, pricing: Pricing) -> Self {
        let bindings = RoleName::ALL
            .into_iter()
            .map(|role| {
                (
                    role,
                    ModelRole {
                        role,
                        provider: provider.to_string(),
                        model_id: model_id.to_string(),
                        pricing,
                    },
                )
            })
            .collect();
        Self { bindings }
    }

    /// Binds every role to `provider`, keeping model ids and pricing.
    pub fn rebind_all(&mut self, provider: &str) {
        for b in self.bindings.values_mut() {
            b.provider = provider.to_string();
        }
    }
}

/// Resolves one binding per role. Models served by the `mock` provider may
/// omit pricing (zero cost); every other model needs a pricing entry.
pub fn load_role_bindings(
    models: &ModelsConfig,
    pricing: &BTreeMap<String, Pricing>,
    providers: &ProviderRegistry,
) -> Result<RoleBindings, BindingError> {
    for key in models.roles.keys() {
        key.parse::<RoleName>()
            .map_err(|_| BindingError::UnknownRole(key.clone()))?;
    }
    let mut bindings = BTreeMap::new();
    for role in RoleName::ALL {
        let over = models.roles.get(role.as_str());
        if over.is_none() && !models.inherit_defaults {
            return Err(BindingError::MissingRole(role));
        }
        let provider = over
            .and_then(|o| o.provider.clone())
            .unwrap_or_else(|| DEFAULT_PROVIDER.to_string());
        let model_id = match over.and_then(|o| o.model.clone()) {
            Some(m) => m,
            None if models.inherit_defaults || provider == "mock" => default_model(role).to_string(),
            None => return Err(BindingError::MissingRole(role)),
        };
        if !providers.contains(&provider) {
            return Err(BindingError::UnknownProvider { role, provider });
        }
        let price = match pricing.get(&model_id) {
            Some(p) => *p,
            None if provider == "mock" => Pricing::default(),
            None => return Err(BindingError::MissingPricing(model_id)),
        };
        bindings.insert(
            role,
            ModelRole {
                role,
                provider,
                model_id,
                pricing: price,
            },
        );
    }
    Ok(RoleBindings { bindings })
}
