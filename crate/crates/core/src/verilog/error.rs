use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("{path}:{line}:{col}: syntax error: {message}")]
    Syntax {
        path: String,
        line: u32,
        col: u32,
        message: String,
    },
    #[error("{location}: unsupported construct: {feature}")]
    UnsupportedConstruct { feature: String, location: String },
    #[error("unknown module `{0}`")]
    UnknownModule(String),
    #[error("recursive instantiation: {}", .0.join(" -> "))]
    RecursiveInstantiation(Vec<String>),
    #[error("module `{module}` has no port `{port}`")]
    UnknownPort { module: String, port: String },
    #[error("unresolved parameter `{0}`")]
    UnresolvedParameter(String),
    #[error("undeclared identifier `{name}` in module `{module}`")]
    UndeclaredIdentifier { module: String, name: String },
    #[error("duplicate declaration of `{name}` in module `{module}`")]
    DuplicateDeclaration { module: String, name: String },
    #[error("source unit is empty")]
    EmptySource,
}

pub type Result<T> = std::result::Result<T, FrontendError>;
