//! Interchangeable VAR order-selection policies, looked up by name.
//!
//! A policy is written `name[:argument]`: `fixed:2` (or a bare `2`) and
//! `aic:20` are registered by default.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::signal::TimeSeries;
use crate::varx::select_order_aic;

pub trait OrderPolicy: fmt::Debug + Send + Sync {
    /// Registry key.
    fn name(&self) -> &'static str;

    /// Round-trippable `name:argument` form.
    fn spec(&self) -> String;

    fn select(&self, data: &TimeSeries) -> Result<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedOrder(pub usize);

impl OrderPolicy for FixedOrder {
    fn name(&self) -> &'static str {
        "fixed"
    }

    fn spec(&self) -> String {
        format!("fixed:{}", self.0)
    }

    fn select(&self, _data: &TimeSeries) -> Result<usize> {
        Ok(self.0)
    }
}

/// Minimum-AIC order over `1..=p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AicOrder {
    pub p_max: usize,
}

impl OrderPolicy for AicOrder {
    fn name(&self) -> &'static str {
        "aic"
    }

    fn spec(&self) -> String {
        format!("aic:{}", self.p_max)
    }

    fn select(&self, data: &TimeSeries) -> Result<usize> {
        select_order_aic(data, self.p_max)
    }
}

type Factory = fn(Option<&str>) -> Result<Box<dyn OrderPolicy>>;

fn positive_arg(name: &str, arg: Option<&str>) -> Result<usize> {
    let raw = arg.ok_or_else(|| Error::InvalidArgument(format!("order policy `{name}` needs an argument")))?;
    match raw.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::InvalidArgument(format!(
            "order policy `{name}` needs a positive integer, got `{raw}`"
        ))),
    }
}

pub struct OrderPolicyRegistry {
    factories: BTreeMap<&'static str, Factory>,
}

impl Default for OrderPolicyRegistry {
    fn default() -> Self {
        let mut reg = OrderPolicyRegistry {
            factories: BTreeMap::new(),
        };
        reg.register("fixed", |arg| Ok(Box::new(FixedOrder(positive_arg("fixed", arg)?))));
        reg.register("aic", |arg| {
            Ok(Box::new(AicOrder {
                p_max: positive_arg("aic", arg)?,
            }))
        });
        reg
    }
}

impl OrderPolicyRegistry {
    pub fn register(&mut self, name: &'static str, factory: Factory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    /// Resolves `name:arg`; a bare integer means `fixed:<n>`.
    pub fn parse(&self, spec: &str) -> Result<Box<dyn OrderPolicy>> {
        let spec = spec.trim();
        if spec.bytes().all(|b| b.is_ascii_digit()) && !spec.is_empty() {
            return self.parse(&format!("fixed:{spec}"));
        }
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (spec, None),
        };
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown order policy `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(arg)
    }
}
