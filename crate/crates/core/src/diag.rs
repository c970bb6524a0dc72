use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Machine-readable diagnostic codes.
pub mod code {
    pub const SYNTAX: &str = "E001";
    pub const UNKNOWN_FIELD: &str = "E002";
    pub const MISSING_FIELD: &str = "E003";
    pub const WRONG_TYPE: &str = "E004";
    pub const DUPLICATE_KEY: &str = "E005";
    pub const INVALID_VALUE: &str = "E006";
    pub const DUPLICATE_NAME: &str = "E010";
    pub const UNKNOWN_TEMPLATE: &str = "E011";
    pub const UNKNOWN_ENTRYPOINT: &str = "E012";
    pub const UNKNOWN_VOLUME: &str = "E013";
    pub const CYCLE: &str = "E014";
    pub const UNDECLARED_PARAMETER: &str = "E015";
    pub const LIMIT_BELOW_REQUEST: &str = "E016";
    pub const UNKNOWN_REFERENCE: &str = "E017";
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub pos: Pos,
    pub code: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}] {}", self.pos, self.code, self.message)
    }
}

/// Every problem found in one document, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn push(&mut self, pos: Pos, code: &'static str, message: impl Into<String>) {
        self.0.push(Diagnostic {
            pos,
            code,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter()
    }

    pub fn has_code(&self, code: &str) -> bool {
        self.0.iter().any(|d| d.code == code)
    }

    /// Sorts by position; `Err(self)` when anything was reported.
    pub fn into_result<T>(mut self, value: T) -> Result<T, Diagnostics> {
        if self.0.is_empty() {
            Ok(value)
        } else {
            self.0.sort();
            Err(self)
        }
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}
