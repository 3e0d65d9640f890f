//! Call-forbidding policy: an ordered set of method descriptors.
//!
//! File format: UTF-8 text, one descriptor per line in
//! `Lpkg/Class;->name(Params)Return` form. `#` starts a comment, blank lines
//! are ignored, CRLF line endings are accepted.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use crate::model::MethodDescriptor;

/// The policy shipped with the tool: deny reading the device IMEI.
pub const DEFAULT_POLICY: &str = include_str!("../policy/default.blacklist");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {reason}\n  {text}\n  {caret}")]
pub struct BlacklistError {
    /// 1-based line number.
    pub line: usize,
    /// 1-based column of the offending character.
    pub column: usize,
    pub reason: String,
    pub text: String,
    caret: String,
}

impl BlacklistError {
    fn new(line: usize, column: usize, reason: impl Into<String>, text: &str) -> Self {
        BlacklistError {
            line,
            column,
            reason: reason.into(),
            text: text.to_owned(),
            caret: format!("{}^", " ".repeat(column.saturating_sub(1))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlacklistEntry {
    pub descriptor: MethodDescriptor,
    /// 1-based line the entry was first read from.
    pub line: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    entries: Vec<BlacklistEntry>,
}

impl Blacklist {
    pub fn new() -> Self {
        Self::default()
    }

    /// The built-in policy.
    pub fn default_policy() -> Self {
        parse_blacklist(DEFAULT_POLICY).expect("built-in policy parses")
    }

    pub fn from_descriptors<I: IntoIterator<Item = MethodDescriptor>>(descriptors: I) -> Self {
        let mut b = Blacklist::new();
        for d in descriptors {
            b.insert(d, 0);
        }
        b
    }

    /// Adds an entry; returns false if it was already present.
    pub fn insert(&mut self, descriptor: MethodDescriptor, line: usize) -> bool {
        if self.contains(&descriptor) {
            return false;
        }
        self.entries.push(BlacklistEntry { descriptor, line });
        true
    }

    pub fn contains(&self, descriptor: &MethodDescriptor) -> bool {
        self.entries.iter().any(|e| &e.descriptor == descriptor)
    }

    pub fn entries(&self) -> &[BlacklistEntry] {
        &self.entries
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &MethodDescriptor> {
        self.entries.iter().map(|e| &e.descriptor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for Blacklist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{}", e.descriptor)?;
        }
        Ok(())
    }
}

/// Parses policy text into a `Blacklist`, or fails at the first malformed line.
pub fn parse_blacklist(text: &str) -> Result<Blacklist, BlacklistError> {
    let mut blacklist = Blacklist::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let lead = content.chars().take_while(|c| c.is_whitespace()).count();
        let descriptor: MethodDescriptor = trimmed
            .parse()
            .map_err(|e: crate::model::DescriptorError| BlacklistError::new(line_no, lead + e.column + 1, e.reason, raw))?;
        if descriptor.name == "<init>" || descriptor.name == "<clinit>" {
            let column = lead + descriptor.class.chars().count() + 3;
            return Err(BlacklistError::new(
                line_no,
                column,
                "constructors and class initializers cannot be blacklisted",
                raw,
            ));
        }
        if !seen.insert(descriptor.clone()) {
            log::warn!("line {line_no}: duplicate entry {descriptor} ignored");
            continue;
        }
        blacklist.insert(descriptor, line_no);
    }
    Ok(blacklist)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMEI: &str = "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;";

    #[test]
    fn default_policy_is_the_imei_getter() {
        let b = Blacklist::default_policy();
        assert_eq!(b.len(), 1);
        assert_eq!(b.entries()[0].descriptor.to_string(), IMEI);
    }

    #[test]
    fn comments_blank_lines_and_crlf() {
        let text = format!("# header\r\n\r\n   \r\n{IMEI}   # trailing\r\n");
        let b = parse_blacklist(&text).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.entries()[0].line, 4);
        assert!(parse_blacklist("# only\n\n#comments\n").unwrap().is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let b = parse_blacklist(&format!("{IMEI}\n{IMEI}\n")).unwrap();
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn missing_arrow_is_located() {
        let err = parse_blacklist("# c\n  Landroid/telephony/TelephonyManager;getDeviceId()V\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.column, 3 + "Landroid/telephony/TelephonyManager;".len());
        assert!(err.to_string().contains('^'));
    }

    #[test]
    fn constructors_rejected() {
        let err = parse_blacklist("Ljava/lang/Object;-><init>()V").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(err.column, 21);
    }
}
