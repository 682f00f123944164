//! Source packages: lexing, parsing, and static checking of `.hlo` files.

pub mod ast;
pub mod check;
pub mod lexer;
pub mod parser;

use std::fmt;
use std::path::{Path, PathBuf};

pub use check::{check, CheckedPackage};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse_package;

/// One `.hlo` file of a source package.
#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub path: PathBuf,
    pub text: String,
    line_starts: Vec<usize>,
}

impl SourceUnit {
    pub fn new(path: impl Into<PathBuf>, text: impl Into<String>) -> Self {
        let text = text.into();
        let mut line_starts = vec![0];
        line_starts.extend(text.match_indices('\n').map(|(i, _)| i + 1));
        SourceUnit { path: path.into(), text, line_starts }
    }

    /// Reads a unit from disk; non-UTF-8 content is an I/O-level failure.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        let text = String::from_utf8(bytes)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(SourceUnit::new(path, text))
    }

    /// 1-based (line, column) for a byte offset.
    pub fn position(&self, offset: usize) -> (u32, u32) {
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let col = self.text[self.line_starts[line]..offset.min(self.text.len())].chars().count();
        (line as u32 + 1, col as u32 + 1)
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }
}

/// Loads every `.hlo` file in a directory, sorted by file name.
pub fn load_package_dir(dir: &Path) -> std::io::Result<Vec<SourceUnit>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "hlo"))
        .collect();
    paths.sort();
    paths.iter().map(|p| SourceUnit::load(p)).collect()
}

/// A source position. `unit` indexes the unit list handed to the parser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Loc {
    pub unit: u32,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagCode {
    LexError,
    ParseError,
    MissingPackageDirective,
    PackageNameMismatch,
    TypeError,
    UnknownName,
    QualifierError,
    /// Auto-corrected constructor name case.
    CaseCorrected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: u32,
    pub col: u32,
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{}:{}:{}: {}: {}", self.path.display(), self.line, self.col, sev, self.message)
    }
}

/// Failure of any frontend stage; carries every diagnostic produced.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{}", render(.diagnostics))]
pub struct FrontendError {
    pub diagnostics: Vec<Diagnostic>,
}

impl FrontendError {
    pub fn single(d: Diagnostic) -> Self {
        FrontendError { diagnostics: vec![d] }
    }

    /// Code of the first error-severity diagnostic.
    pub fn code(&self) -> Option<DiagCode> {
        self.diagnostics.iter().find(|d| d.severity == Severity::Error).map(|d| d.code)
    }

    pub fn has(&self, code: DiagCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

pub(crate) fn diag(paths: &[PathBuf], loc: Loc, severity: Severity, code: DiagCode, message: impl Into<String>) -> Diagnostic {
    let path = paths.get(loc.unit as usize).cloned().unwrap_or_default();
    Diagnostic { path, line: loc.line, col: loc.col, severity, code, message: message.into() }
}

/// Parses and checks a whole package in one step.
pub fn translate(units: &[SourceUnit]) -> Result<CheckedPackage, FrontendError> {
    let ast = parse_package(units)?;
    check(&ast)
}
