//! Chat-completion access: per-role model routing, tool-call message protocol,
//! cost accounting against a per-attempt budget, and the output-format corrector.

mod format;
mod gateway;
mod ledger;
mod mock;
mod openai;
mod provider;
mod roles;
mod types;

pub use format::{extract_json, FieldKind, FieldSpec, OutputSchema};
pub use gateway::{FormatError, Gateway, GatewayError, FORMAT_CORRECTION_ATTEMPTS, TRANSPORT_RETRIES};
pub use ledger::{Budget, LimitHit, UsageEntry, UsageLedger};
pub use mock::{MockProvider, RecordedCall, ScriptedCall, ScriptedTurn, ScriptedUsage};
pub use openai::OpenAiCompatible;
pub use provider::{ChatProvider, CompletionRequest, ProviderError, ProviderRegistry, ProviderReply};
pub use roles::{
    default_model, load_role_bindings, BindingError, ModelsConfig, RoleBindings, RoleOverride,
    DEFAULT_PROVIDER,
};
pub use types::{Author, ChatTurn, ModelRole, Pricing, RoleName, ToolInvocationRequest, ToolSchema};
