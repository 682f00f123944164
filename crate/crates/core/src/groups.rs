//! Group iteration: run an iterator method on every member reachable through
//! `children()`, each member exactly once, spreading across hosts.
//!
//! A traversal carries the set of nodes already claimed. A visited node claims
//! its unclaimed children before forwarding, so siblings never both visit a
//! shared child; a per-host record of (traversal, node) catches the rest.

use futures::future::join_all;

use crate::engine::{boxed, BoxFut, Ctx};
use crate::error::{EngineError, EngineResult};
use crate::net::msg::NodeKey;
use crate::value::{ObjectRef, Value};

pub type Failures = Vec<(String, EngineError)>;

pub fn node_key(r: &ObjectRef) -> NodeKey {
    NodeKey { host: r.host.to_string(), space: r.space, oid: r.oid }
}

/// `group -> method(args)` started on this host.
pub(crate) async fn iterate(ctx: &Ctx, root: ObjectRef, method: u32, args: Vec<Value>) -> EngineResult<()> {
    let tid = ctx.eng.fresh_id();
    let visited = vec![node_key(&root)];
    let failures = if root.is_on(ctx.eng.name()) {
        visit(ctx.clone(), tid, root, method, args, visited, false).await
    } else {
        forward(ctx, tid, root, method, args, visited).await
    };
    if failures.is_empty() {
        Ok(())
    } else {
        Err(EngineError::PartialFailure(failures))
    }
}

async fn forward(ctx: &Ctx, tid: u64, node: ObjectRef, method: u32, args: Vec<Value>, visited: Vec<NodeKey>) -> Failures {
    match crate::engine::remote_iterate(ctx, &node, method, &args, tid, visited).await {
        Ok(()) => Vec::new(),
        Err(EngineError::PartialFailure(list)) => list,
        Err(e) => vec![(node.host.to_string(), e)],
    }
}

/// Visits a local node, then its unclaimed children. `on_service` runs the body
/// on the service queue (the visit arrived from another host).
pub(crate) fn visit(ctx: Ctx, tid: u64, node: ObjectRef, method: u32, args: Vec<Value>, visited: Vec<NodeKey>, on_service: bool) -> BoxFut<'static, Failures> {
    boxed(async move {
        let eng = ctx.eng.clone();
        let key = node_key(&node);
        if !eng.claim_visit(tid, &key) {
            return Vec::new();
        }
        let mut failures = Vec::new();
        let kept: Vec<Value> = args.iter().map(Value::snapshot).collect();
        if let Err(e) = crate::engine::run_body(&ctx, &node, method, args, on_service).await {
            failures.push((eng.name().to_string(), e));
        }
        let kids = match crate::engine::children_of(&ctx, &node).await {
            Ok(k) => k,
            Err(e) => {
                failures.push((eng.name().to_string(), e));
                return failures;
            }
        };
        let mut claimed = visited;
        let mut fresh = Vec::new();
        for k in kids {
            let nk = node_key(&k);
            if !claimed.contains(&nk) {
                claimed.push(nk);
                fresh.push(k);
            }
        }
        let subs = fresh.into_iter().map(|k| {
            let (ctx, args, claimed) = (ctx.clone(), kept.iter().map(Value::snapshot).collect::<Vec<_>>(), claimed.clone());
            boxed(async move {
                if k.is_on(ctx.eng.name()) {
                    visit(ctx, tid, k, method, args, claimed, on_service).await
                } else {
                    forward(&ctx, tid, k, method, args, claimed).await
                }
            })
        });
        for f in join_all(subs).await {
            failures.extend(f);
        }
        failures
    })
}
