use serde::Serialize;

/// One named assumption check with the quantity that was measured.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub mandatory: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Outcome of a batch of checks. `passed` holds iff every mandatory check passed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub subject: String,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new(subject: impl Into<String>) -> Self {
        Self { subject: subject.into(), passed: true, checks: Vec::new() }
    }

    pub fn push(&mut self, name: &str, passed: bool, measured: f64, threshold: f64) -> &mut Check {
        self.push_check(Check {
            name: name.to_string(),
            passed,
            measured,
            threshold,
            mandatory: true,
            note: None,
        })
    }

    pub fn push_check(&mut self, check: Check) -> &mut Check {
        self.checks.push(check);
        self.refresh();
        self.checks.last_mut().unwrap()
    }

    pub fn refresh(&mut self) {
        self.passed = self.checks.iter().all(|c| c.passed || !c.mandatory);
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.mandatory && !c.passed)
    }

    /// Appends all checks of `other`, prefixing their names.
    pub fn merge(&mut self, prefix: &str, other: ValidationReport) {
        for mut c in other.checks {
            if !prefix.is_empty() {
                c.name = format!("{prefix}.{}", c.name);
            }
            self.checks.push(c);
        }
        self.refresh();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optional_checks_do_not_fail_the_report() {
        let mut r = ValidationReport::new("demo");
        r.push("a", true, 0.0, 1.0);
        r.push("b", false, 2.0, 1.0).mandatory = false;
        r.refresh();
        assert!(r.passed);
        r.push("c", false, 2.0, 1.0);
        assert!(!r.passed);
        assert_eq!(r.failed().count(), 1);
    }
}
