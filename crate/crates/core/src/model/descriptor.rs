//! Type and method descriptors in dex (smali) syntax.
//!
//! A type descriptor is one of `V`, the primitives `ZBSCIJFD`, a class
//! reference `Lpkg/Name;`, or an array `[<type>`. A method descriptor is
//! written `Lpkg/Class;->name(Params)Return` with no whitespace.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const MAX_ARRAY_DIMENSIONS: usize = 255;

/// A descriptor syntax error. `column` is the 0-based char position of the
/// offending character within the parsed text.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{reason} at column {column}")]
pub struct DescriptorError {
    pub column: usize,
    pub reason: String,
}

impl DescriptorError {
    fn new(column: usize, reason: impl Into<String>) -> Self {
        DescriptorError {
            column,
            reason: reason.into(),
        }
    }
}

fn is_simple_name_char(c: char) -> bool {
    !matches!(c, ';' | '/' | '.' | '[' | '(' | ')' | '<' | '>') && !c.is_whitespace() && !c.is_control()
}

/// Parses one field type (no `V`) or, when `allow_void`, a return type,
/// starting at char position `start`. Returns the char position just past it.
fn parse_type_at(chars: &[char], start: usize, allow_void: bool) -> Result<usize, DescriptorError> {
    let mut pos = start;
    let mut dims = 0;
    while chars.get(pos) == Some(&'[') {
        dims += 1;
        pos += 1;
    }
    if dims > MAX_ARRAY_DIMENSIONS {
        return Err(DescriptorError::new(start, "too many array dimensions"));
    }
    match chars.get(pos) {
        None => Err(DescriptorError::new(pos, "expected a type")),
        Some('V') if allow_void && dims == 0 => Ok(pos + 1),
        Some('V') => Err(DescriptorError::new(pos, "void is only valid as a return type")),
        Some('Z' | 'B' | 'S' | 'C' | 'I' | 'J' | 'F' | 'D') => Ok(pos + 1),
        Some('L') => {
            pos += 1;
            let mut segment_len = 0;
            loop {
                match chars.get(pos) {
                    None => return Err(DescriptorError::new(pos, "unterminated class descriptor")),
                    Some(';') => {
                        if segment_len == 0 {
                            return Err(DescriptorError::new(pos, "empty class name segment"));
                        }
                        return Ok(pos + 1);
                    }
                    Some('/') => {
                        if segment_len == 0 {
                            return Err(DescriptorError::new(pos, "empty class name segment"));
                        }
                        segment_len = 0;
                    }
                    Some(&c) if is_simple_name_char(c) => segment_len += 1,
                    Some(&c) => {
                        return Err(DescriptorError::new(pos, format!("illegal character {c:?} in class name")))
                    }
                }
                pos += 1;
            }
        }
        Some(&c) => Err(DescriptorError::new(pos, format!("unexpected {c:?}, expected a type"))),
    }
}

/// Checks a complete field type descriptor (anything but `V`).
pub fn validate_field_type(descriptor: &str) -> Result<(), DescriptorError> {
    validate_type(descriptor, false)
}

/// Checks a complete type descriptor, `V` included.
pub fn validate_return_type(descriptor: &str) -> Result<(), DescriptorError> {
    validate_type(descriptor, true)
}

fn validate_type(descriptor: &str, allow_void: bool) -> Result<(), DescriptorError> {
    let chars: Vec<char> = descriptor.chars().collect();
    let end = parse_type_at(&chars, 0, allow_void)?;
    if end != chars.len() {
        return Err(DescriptorError::new(end, "trailing characters after type"));
    }
    Ok(())
}

/// Checks a type that may own methods or fields: a class reference or an array.
pub fn validate_class_type(descriptor: &str) -> Result<(), DescriptorError> {
    validate_field_type(descriptor)?;
    if descriptor.starts_with('L') || descriptor.starts_with('[') {
        Ok(())
    } else {
        Err(DescriptorError::new(0, "expected a class or array type"))
    }
}

/// Checks a member name. `<init>` and `<clinit>` are the only names allowed to
/// contain angle brackets.
pub fn validate_member_name(name: &str) -> Result<(), DescriptorError> {
    if name == "<init>" || name == "<clinit>" {
        return Ok(());
    }
    if name.is_empty() {
        return Err(DescriptorError::new(0, "empty member name"));
    }
    match name.chars().position(|c| !is_simple_name_char(c)) {
        Some(col) => Err(DescriptorError::new(col, "illegal character in member name")),
        None => Ok(()),
    }
}

/// The shorty character of a type descriptor: `L` for every reference or array type.
pub fn shorty_char(descriptor: &str) -> char {
    match descriptor.as_bytes().first() {
        Some(b'[') | Some(b'L') => 'L',
        Some(&b) => b as char,
        None => '?',
    }
}

/// Registers a value of this type occupies (2 for `J`/`D`, 0 for `V`).
pub fn register_width(descriptor: &str) -> u16 {
    match descriptor {
        "J" | "D" => 2,
        "V" => 0,
        _ => 1,
    }
}

/// Return type plus ordered parameter types of a method.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prototype {
    pub return_type: String,
    pub parameters: Vec<String>,
}

impl Prototype {
    pub fn new(return_type: impl Into<String>, parameters: Vec<String>) -> Self {
        Prototype {
            return_type: return_type.into(),
            parameters,
        }
    }

    pub fn shorty(&self) -> String {
        std::iter::once(self.return_type.as_str())
            .chain(self.parameters.iter().map(String::as_str))
            .map(shorty_char)
            .collect()
    }

    /// Number of registers the arguments occupy (wide types count twice).
    pub fn parameter_registers(&self) -> u32 {
        self.parameters.iter().map(|p| u32::from(register_width(p))).sum()
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        validate_return_type(&self.return_type)?;
        for p in &self.parameters {
            validate_field_type(p)?;
        }
        Ok(())
    }
}

impl fmt::Display for Prototype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for p in &self.parameters {
            f.write_str(p)?;
        }
        write!(f, "){}", self.return_type)
    }
}

/// Parses `(Params)Return` starting at char `start`; returns the prototype and the end position.
fn parse_prototype_at(chars: &[char], start: usize) -> Result<(Prototype, usize), DescriptorError> {
    if chars.get(start) != Some(&'(') {
        return Err(DescriptorError::new(start, "expected '('"));
    }
    let mut pos = start + 1;
    let mut parameters = Vec::new();
    while chars.get(pos) != Some(&')') {
        if pos >= chars.len() {
            return Err(DescriptorError::new(pos, "missing ')'"));
        }
        let end = parse_type_at(chars, pos, false)?;
        parameters.push(chars[pos..end].iter().collect());
        pos = end;
    }
    pos += 1;
    let end = parse_type_at(chars, pos, true)?;
    let return_type = chars[pos..end].iter().collect();
    Ok((Prototype { return_type, parameters }, end))
}

impl FromStr for Prototype {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        let (proto, end) = parse_prototype_at(&chars, 0)?;
        if end != chars.len() {
            return Err(DescriptorError::new(end, "trailing characters after prototype"));
        }
        Ok(proto)
    }
}

/// Full identity of a method: owning class, name and prototype.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodDescriptor {
    pub class: String,
    pub name: String,
    pub prototype: Prototype,
}

impl MethodDescriptor {
    pub fn new(class: impl Into<String>, name: impl Into<String>, prototype: Prototype) -> Self {
        MethodDescriptor {
            class: class.into(),
            name: name.into(),
            prototype,
        }
    }

    pub fn return_type(&self) -> &str {
        &self.prototype.return_type
    }

    pub fn parameters(&self) -> &[String] {
        &self.prototype.parameters
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        validate_class_type(&self.class)?;
        validate_member_name(&self.name)?;
        self.prototype.validate()
    }
}

impl fmt::Display for MethodDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}{}", self.class, self.name, self.prototype)
    }
}

impl FromStr for MethodDescriptor {
    type Err = DescriptorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        let class_end = parse_type_at(&chars, 0, false)?;
        let class: String = chars[..class_end].iter().collect();
        validate_class_type(&class)?;
        if chars.get(class_end) != Some(&'-') || chars.get(class_end + 1) != Some(&'>') {
            return Err(DescriptorError::new(class_end, "expected '->' after class descriptor"));
        }
        let name_start = class_end + 2;
        let name_end = chars[name_start..]
            .iter()
            .position(|&c| c == '(')
            .map(|p| p + name_start)
            .ok_or_else(|| DescriptorError::new(chars.len(), "expected '(' after method name"))?;
        let name: String = chars[name_start..name_end].iter().collect();
        validate_member_name(&name).map_err(|e| DescriptorError::new(name_start + e.column, e.reason))?;
        let (prototype, end) = parse_prototype_at(&chars, name_end)?;
        if end != chars.len() {
            return Err(DescriptorError::new(end, "trailing characters after descriptor"));
        }
        Ok(MethodDescriptor { class, name, prototype })
    }
}

/// Field identity: owning class, name and type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldDescriptor {
    pub class: String,
    pub name: String,
    pub field_type: String,
}

impl FieldDescriptor {
    pub fn new(class: impl Into<String>, name: impl Into<String>, field_type: impl Into<String>) -> Self {
        FieldDescriptor {
            class: class.into(),
            name: name.into(),
            field_type: field_type.into(),
        }
    }
}

impl fmt::Display for FieldDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}:{}", self.class, self.name, self.field_type)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type_grammar() {
        for ok in ["I", "J", "Ljava/lang/String;", "[B", "[[Ljava/lang/Object;", "La$b;", "Lx/y-z;"] {
            validate_field_type(ok).unwrap();
        }
        validate_return_type("V").unwrap();
        for bad in ["V", "[V", "L;", "Ljava//String;", "Ljava/lang/String", "Q", "", "II", "Ljava.lang.String;"] {
            assert!(validate_field_type(bad).is_err(), "{bad:?} accepted");
        }
        let deep = format!("{}I", "[".repeat(256));
        assert!(validate_field_type(&deep).is_err());
    }

    #[test]
    fn method_descriptor_round_trip() {
        let text = "Landroid/telephony/TelephonyManager;->getDeviceId()Ljava/lang/String;";
        let d: MethodDescriptor = text.parse().unwrap();
        assert_eq!(d.class, "Landroid/telephony/TelephonyManager;");
        assert_eq!(d.name, "getDeviceId");
        assert!(d.parameters().is_empty());
        assert_eq!(d.return_type(), "Ljava/lang/String;");
        assert_eq!(d.to_string(), text);

        let d: MethodDescriptor = "Lx/Y;->f(IJ[Ljava/lang/String;)[B".parse().unwrap();
        assert_eq!(d.parameters(), ["I", "J", "[Ljava/lang/String;"]);
        assert_eq!(d.prototype.shorty(), "LIJL");
        assert_eq!(d.prototype.parameter_registers(), 4);

        let ctor: MethodDescriptor = "La/B;-><init>()V".parse().unwrap();
        assert_eq!(ctor.name, "<init>");
    }

    #[test]
    fn method_descriptor_errors_are_located() {
        let err = "Lx/Y;getFoo()V".parse::<MethodDescriptor>().unwrap_err();
        assert_eq!(err.column, 5);
        let err = "Lx/Y;->get Foo()V".parse::<MethodDescriptor>().unwrap_err();
        assert_eq!(err.column, 10);
        let err = "Lx/Y;->f(Q)V".parse::<MethodDescriptor>().unwrap_err();
        assert_eq!(err.column, 9);
        assert!("Lx/Y;->f()".parse::<MethodDescriptor>().is_err());
        assert!("Lx/Y;->f()V ".parse::<MethodDescriptor>().is_err());
        assert!("I->f()V".parse::<MethodDescriptor>().is_err());
        assert!("Lx/Y;-><foo>()V".parse::<MethodDescriptor>().is_err());
    }
}
