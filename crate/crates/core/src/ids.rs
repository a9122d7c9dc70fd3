//! Opaque, monotonic identifiers.
//!
//! Every entity inside a project is named `{scope}-{kind}{counter}` where the
//! counter is zero-padded so that lexicographic order equals creation order.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug)]
pub struct IdGen {
    scope: String,
    next: AtomicU64,
}

impl IdGen {
    pub fn new(scope: impl Into<String>) -> Self {
        Self::with_counter(scope, 1)
    }

    pub fn with_counter(scope: impl Into<String>, next: u64) -> Self {
        Self {
            scope: scope.into(),
            next: AtomicU64::new(next),
        }
    }

    /// Allocates the next id for an entity of the given kind (`n`, `plan`, `run`, ...).
    pub fn next(&self, kind: &str) -> String {
        let n = self.next.fetch_add(1, Ordering::Relaxed);
        format!("{}-{}{:06}", self.scope, kind, n)
    }

    pub fn scope(&self) -> &str {
        &self.scope
    }

    /// The counter value the next call to [`IdGen::next`] will use.
    pub fn peek(&self) -> u64 {
        self.next.load(Ordering::Relaxed)
    }
}

impl Clone for IdGen {
    fn clone(&self) -> Self {
        Self::with_counter(self.scope.clone(), self.peek())
    }
}

impl PartialEq for IdGen {
    fn eq(&self, other: &Self) -> bool {
        self.scope == other.scope && self.peek() == other.peek()
    }
}

/// A fresh, time-ordered project scope such as `p0192f0c3...`.
pub fn new_project_scope() -> String {
    format!("p{}", uuid_like())
}

fn uuid_like() -> String {
    use rand::Rng;
    let millis = chrono::Utc::now().timestamp_millis() as u64;
    let tail: u32 = rand::rng().random();
    format!("{millis:012x}{tail:08x}")
}

/// The project scope an entity id belongs to.
pub fn scope_of(id: &str) -> &str {
    id.split_once('-').map(|(scope, _)| scope).unwrap_or(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_sort_in_creation_order() {
        let ids = IdGen::with_counter("demo", 9);
        let a = ids.next("n");
        let b = ids.next("n");
        assert_eq!(a, "demo-n000009");
        assert!(a < b);
        assert_eq!(scope_of(&b), "demo");
    }

    #[test]
    fn project_scope_has_no_separator() {
        let scope = new_project_scope();
        assert!(!scope.contains('-'));
        assert!(scope.starts_with('p'));
    }
}
