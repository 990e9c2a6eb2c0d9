//! Named exchange strategies. A search looks its criterion up here, so new
//! objectives plug in without touching the multi-start driver.

use rand_chacha::ChaCha8Rng;

use crate::candidates::CandidateSet;
use crate::criteria::Goal;
use crate::error::{Error, Result};

/// Outcome of one start: pool indices of the final design and its objective.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub rows: Vec<usize>,
    pub objective: f64,
    pub swaps: usize,
}

pub trait ExchangeStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    fn goal(&self) -> Goal;

    /// Precomputes whatever the exchange needs for `n_runs`-run designs
    /// drawn from the candidate pool.
    fn prepare<'a>(
        &self,
        cands: &'a CandidateSet,
        n_runs: usize,
    ) -> Result<Box<dyn PreparedExchange + 'a>>;
}

pub trait PreparedExchange: Send + Sync {
    fn run(&self, rng: &mut ChaCha8Rng, max_passes: usize) -> Result<StartOutcome>;
}

pub struct StrategyRegistry {
    entries: Vec<Box<dyn ExchangeStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry { entries: Vec::new() }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(super::fedorov::Fedorov)).expect("fresh registry");
        r.register(Box::new(super::chi2::Chi2Exchange)).expect("fresh registry");
        r
    }

    pub fn register(&mut self, s: Box<dyn ExchangeStrategy>) -> Result<()> {
        let mut names = vec![s.name()];
        names.extend_from_slice(s.aliases());
        if let Some(dup) = names.iter().find(|n| self.lookup(n).is_some()) {
            return Err(Error::validation(format!(
                "search strategy `{dup}` is already registered"
            )));
        }
        self.entries.push(s);
        Ok(())
    }

    fn lookup(&self, name: &str) -> Option<&dyn ExchangeStrategy> {
        self.entries
            .iter()
            .find(|s| s.name() == name || s.aliases().contains(&name))
            .map(|s| s.as_ref())
    }

    pub fn get(&self, name: &str) -> Result<&dyn ExchangeStrategy> {
        self.lookup(name).ok_or_else(|| Error::UnknownStrategy {
            name: name.to_string(),
            known: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|s| s.name()).collect()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
