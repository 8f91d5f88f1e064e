//! Name-keyed registries of interchangeable strategies.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{config, Result};
use crate::window::{AxialWindow, RegularWindow, WindowStrategy};

/// Builds a strategy from the argument text that follows its name.
pub type WindowFactory = fn(&str) -> Result<Arc<dyn WindowStrategy>>;

#[derive(Default)]
pub struct WindowRegistry {
    factories: BTreeMap<&'static str, WindowFactory>,
}

impl WindowRegistry {
    pub fn register(&mut self, name: &'static str, factory: WindowFactory) -> &mut Self {
        self.factories.insert(name, factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    /// Parses `args` with the factory registered under `name`.
    pub fn build(&self, name: &str, args: &str) -> Result<Arc<dyn WindowStrategy>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            let known: Vec<_> = self.names().collect();
            config(format!("unknown window kind `{name}` (known: {})", known.join(", ")))
        })?;
        factory(args)
    }
}

/// Registry holding the built-in window strategies.
pub fn windows() -> &'static WindowRegistry {
    static REGISTRY: OnceLock<WindowRegistry> = OnceLock::new();
    REGISTRY.get_or_init(|| {
        let mut r = WindowRegistry::default();
        r.register("regular", RegularWindow::parse)
            .register("axial", AxialWindow::parse);
        r
    })
}
