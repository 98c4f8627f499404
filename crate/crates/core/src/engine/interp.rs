use std::collections::BTreeMap;
use std::sync::Arc;

use super::pep::{PepContext, RuleBase, Verdict};
use super::service::{IoTracker, MicroService, ServiceCall};
use super::Zone;
use crate::error::{Error, Result};
use crate::ruledsl::{eval_expr, Action, Call, EvalError, Expr, Rhs, Scope, Value};

pub(crate) type Services = Arc<BTreeMap<String, Arc<MicroService>>>;

/// How an action chain ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Flow {
    Continue,
    Allow,
    Deny(String),
}

struct Frame<'a> {
    ctx: &'a PepContext,
    locals: &'a BTreeMap<String, Value>,
}

impl Scope for Frame<'_> {
    fn lookup(&self, name: &str) -> Option<Value> {
        self.ctx.get(name).or_else(|| self.locals.get(name)).cloned()
    }
}

/// Executes action chains against one firing's context.
pub(crate) struct Exec<'a> {
    pub zone: &'a Zone,
    pub services: &'a Services,
    pub ctx: &'a PepContext,
    /// Collection that relative paths resolve against.
    pub base: String,
    pub tracker: Option<&'a IoTracker>,
}

impl Exec<'_> {
    fn eval(&self, e: &Expr, locals: &BTreeMap<String, Value>) -> Result<Value> {
        Ok(eval_expr(e, &Frame { ctx: self.ctx, locals })?)
    }

    fn eval_bool(&self, what: &'static str, e: &Expr, locals: &BTreeMap<String, Value>) -> Result<bool> {
        match self.eval(e, locals)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::TypeMismatch { op: what, left: other.type_name(), right: "bool" }.into()),
        }
    }

    fn call(&self, c: &Call, locals: &BTreeMap<String, Value>) -> Result<Value> {
        let ms = self
            .services
            .get(&c.name)
            .ok_or_else(|| Error::MicroService { name: c.name.clone(), detail: "no such micro-service".into() })?;
        if c.args.len() < ms.min_args || c.args.len() > ms.max_args {
            return Err(Error::MicroService {
                name: c.name.clone(),
                detail: format!("expects {} argument(s), got {}", ms.arity_text(), c.args.len()),
            });
        }
        let args = c.args.iter().map(|a| self.eval(a, locals)).collect::<Result<Vec<_>>>()?;
        let actor = self.ctx.get("user.name").map(|v| v.to_string()).unwrap_or_default();
        let call =
            ServiceCall { zone: self.zone, actor: &actor, ctx: self.ctx, base: &self.base, tracker: self.tracker };
        (ms.body)(&call, &args).map_err(|e| match e {
            e @ Error::MicroService { .. } => e,
            other => Error::MicroService { name: c.name.clone(), detail: other.to_string() },
        })
    }

    pub fn run(&self, chain: &[Action], locals: &mut BTreeMap<String, Value>) -> Result<Flow> {
        for action in chain {
            let flow = match action {
                Action::Call(c) => {
                    self.call(c, locals)?;
                    Flow::Continue
                }
                Action::Assign { var, value } => {
                    if self.ctx.is_system(var) {
                        return Err(Error::Invalid(format!("${var} is a read-only system binding")));
                    }
                    let v = match value {
                        Rhs::Expr(e) => self.eval(e, locals)?,
                        Rhs::Call(c) => self.call(c, locals)?,
                    };
                    locals.insert(var.clone(), v);
                    Flow::Continue
                }
                Action::If { cond, then, otherwise } => {
                    if self.eval_bool("if", cond, locals)? {
                        self.run(then, locals)?
                    } else if let Some(other) = otherwise {
                        self.run(other, locals)?
                    } else {
                        Flow::Continue
                    }
                }
                Action::Foreach { var, iter, body } => {
                    if self.ctx.is_system(var) {
                        return Err(Error::Invalid(format!("${var} is a read-only system binding")));
                    }
                    let items = match self.eval(iter, locals)? {
                        Value::List(items) => items,
                        other => {
                            return Err(EvalError::TypeMismatch {
                                op: "foreach",
                                left: other.type_name(),
                                right: "list",
                            }
                            .into())
                        }
                    };
                    let mut flow = Flow::Continue;
                    for item in items {
                        locals.insert(var.clone(), Value::Str(item));
                        flow = self.run(body, locals)?;
                        if flow != Flow::Continue {
                            break;
                        }
                    }
                    flow
                }
                Action::Allow => Flow::Allow,
                Action::Deny(reason) => Flow::Deny(reason.clone()),
            };
            if flow != Flow::Continue {
                return Ok(flow);
            }
        }
        Ok(Flow::Continue)
    }
}

/// Finds the first rule whose condition holds and runs its chain.
pub(crate) fn select_and_run(
    zone: &Zone,
    services: &Services,
    rules: &RuleBase,
    pep: &str,
    ctx: &PepContext,
) -> (Option<String>, Verdict) {
    let base = match ctx.get("coll.path") {
        Some(Value::Str(p)) => p.clone(),
        _ => "/".to_string(),
    };
    let exec = Exec { zone, services, ctx, base, tracker: None };
    let empty = BTreeMap::new();
    for rule in rules.rules_for(pep) {
        match exec.eval_bool("when", &rule.condition, &empty) {
            Ok(false) => continue,
            Ok(true) => {
                let mut locals = BTreeMap::new();
                let verdict = match exec.run(&rule.actions, &mut locals) {
                    Ok(Flow::Continue | Flow::Allow) => Verdict::Allow,
                    Ok(Flow::Deny(reason)) => Verdict::Deny(reason),
                    Err(e) => Verdict::Error(e.to_string()),
                };
                return (Some(rule.name.clone()), verdict);
            }
            Err(e) => return (Some(rule.name.clone()), Verdict::Error(e.to_string())),
        }
    }
    (None, Verdict::Allow)
}
