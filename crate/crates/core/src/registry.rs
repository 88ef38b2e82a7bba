//! Name-keyed registries of interchangeable strategies.

use crate::error::{Error, Result};

/// Strategies of one kind behind a common trait object, looked up by name.
/// Iteration follows registration order.
pub struct Registry<T: ?Sized> {
    kind: &'static str,
    entries: Vec<(&'static str, Box<T>)>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(kind: &'static str) -> Registry<T> {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    /// Fails on a duplicate name.
    pub fn register(&mut self, name: &'static str, item: Box<T>) -> Result<()> {
        if self.entries.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("{} `{name}` registered twice", self.kind)));
        }
        self.entries.push((name, item));
        Ok(())
    }

    pub fn with(mut self, name: &'static str, item: Box<T>) -> Registry<T> {
        self.register(name, item).expect("built-in names are distinct");
        self
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.as_ref())
            .ok_or_else(|| Error::UnknownName {
                kind: self.kind,
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &T)> {
        self.entries.iter().map(|(n, t)| (*n, t.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Plain;
    impl Greeter for Plain {
        fn greet(&self) -> String {
            "hi".into()
        }
    }

    #[test]
    fn lookup_and_duplicates() {
        let mut r: Registry<dyn Greeter> = Registry::new("greeter");
        r.register("plain", Box::new(Plain)).unwrap();
        assert_eq!(r.get("plain").unwrap().greet(), "hi");
        assert!(matches!(r.get("loud"), Err(Error::UnknownName { kind: "greeter", .. })));
        assert!(r.register("plain", Box::new(Plain)).is_err());
        assert_eq!(r.names(), vec!["plain"]);
    }
}
