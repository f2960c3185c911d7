//! The dynamic context: in-scope variable bindings and the context item.

use std::sync::Arc;

use crate::jdm::{Item, Sequence};

/// Immutable chain of binding frames; lookups resolve innermost-first.
/// Cloning is cheap, so per-tuple contexts inside closures are built by
/// pushing one frame onto a shared parent.
#[derive(Debug, Clone, Default)]
pub struct DynamicContext {
    inner: Option<Arc<Frame>>,
}

#[derive(Debug)]
struct Frame {
    parent: Option<Arc<Frame>>,
    vars: Vec<(Arc<str>, Arc<Sequence>)>,
    context_item: Option<Item>,
}

impl DynamicContext {
    pub fn empty() -> DynamicContext {
        DynamicContext { inner: None }
    }

    /// New context with one extra variable binding.
    pub fn bind(&self, name: Arc<str>, value: Arc<Sequence>) -> DynamicContext {
        self.push(vec![(name, value)], None)
    }

    /// New context with several bindings in one frame.
    pub fn bind_all(&self, vars: Vec<(Arc<str>, Arc<Sequence>)>) -> DynamicContext {
        self.push(vars, None)
    }

    /// New context with the context item (re)bound.
    pub fn with_context_item(&self, item: Item) -> DynamicContext {
        self.push(Vec::new(), Some(item))
    }

    fn push(&self, vars: Vec<(Arc<str>, Arc<Sequence>)>, context_item: Option<Item>) -> Self {
        DynamicContext {
            inner: Some(Arc::new(Frame { parent: self.inner.clone(), vars, context_item })),
        }
    }

    pub fn lookup(&self, name: &str) -> Option<&Arc<Sequence>> {
        let mut frame = self.inner.as_deref();
        while let Some(f) = frame {
            if let Some((_, value)) = f.vars.iter().rev().find(|(n, _)| n.as_ref() == name) {
                return Some(value);
            }
            frame = f.parent.as_deref();
        }
        None
    }

    pub fn context_item(&self) -> Option<&Item> {
        let mut frame = self.inner.as_deref();
        while let Some(f) = frame {
            if let Some(item) = &f.context_item {
                return Some(item);
            }
            frame = f.parent.as_deref();
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn innermost_binding_wins() {
        let base = DynamicContext::empty();
        let a: Arc<str> = Arc::from("a");
        let ctx = base.bind(a.clone(), Arc::new(vec![Item::integer(1)]));
        let ctx2 = ctx.bind(a.clone(), Arc::new(vec![Item::integer(2)]));
        assert_eq!(ctx.lookup("a").unwrap().as_ref(), &vec![Item::integer(1)]);
        assert_eq!(ctx2.lookup("a").unwrap().as_ref(), &vec![Item::integer(2)]);
        assert!(ctx.lookup("b").is_none());
    }

    #[test]
    fn context_item_chains() {
        let ctx = DynamicContext::empty().with_context_item(Item::integer(7));
        let inner = ctx.bind(Arc::from("x"), Arc::new(vec![]));
        assert_eq!(inner.context_item(), Some(&Item::integer(7)));
        let rebound = inner.with_context_item(Item::integer(9));
        assert_eq!(rebound.context_item(), Some(&Item::integer(9)));
    }
}
