use std::cmp::Ordering;

use chrono::{DateTime, FixedOffset};
use serde_json::{Map, Value};

use super::{
    CompareOp, Expr, Literal, Operand, OrderKey, PropertyPath, QueryError, QueryOptions, QueryPlan, SortDirection,
};
use crate::access::{can_read, Principal};
use crate::model::wire::{render, RenderOptions};
use crate::model::{
    navigation, view_entity, views_of, Cardinality, Entity, EntityRef, EntityType, FieldKind, Navigation,
};
use crate::store::EntityGraph;

/// Page size of top-level collections; continuation is via `@iot.nextLink`.
pub const DEFAULT_PAGE_SIZE: u64 = 100;

#[derive(Clone, Copy)]
pub struct EvalContext<'a> {
    pub graph: &'a EntityGraph,
    pub principal: &'a Principal,
    /// Without trailing slash, e.g. `http://localhost:8080/v1.1`.
    pub service_root: &'a str,
}

enum Resolved {
    Single(Entity),
    Collection { types: Vec<EntityType>, items: Vec<Entity> },
}

/// Evaluates a plan to a single entity document or `{"value": [...]}`.
pub fn evaluate(plan: &QueryPlan, ctx: &EvalContext<'_>) -> Result<Value, QueryError> {
    match resolve_path(plan, ctx)? {
        Resolved::Single(e) => Ok(Value::Object(render_entity(&e, &plan.options, ctx)?)),
        Resolved::Collection { types, items } => {
            let (values, next) = collection(items, &types, &plan.options, ctx, Some(plan))?;
            let mut out = Map::new();
            out.insert("value".into(), Value::Array(values));
            if let Some(link) = next {
                out.insert("@iot.nextLink".into(), Value::String(link));
            }
            Ok(Value::Object(out))
        }
    }
}

fn readable(ctx: &EvalContext<'_>, e: &Entity) -> bool {
    can_read(ctx.principal, e, ctx.graph)
}

fn follow(ctx: &EvalContext<'_>, e: &Entity, nav: &Navigation) -> Vec<Entity> {
    ctx.graph
        .navigate(e, nav)
        .into_iter()
        .filter_map(|r| ctx.graph.get_ref(r))
        .filter(|t| readable(ctx, t))
        .cloned()
        .collect()
}

fn resolve_nav(ty: EntityType, name: &str) -> Result<Navigation, QueryError> {
    navigation(ty, name)
        .ok_or_else(|| QueryError::UnknownRelation { entity_type: ty.name().into(), relation: name.into() })
}

fn resolve_path(plan: &QueryPlan, ctx: &EvalContext<'_>) -> Result<Resolved, QueryError> {
    let first = plan.path.first().ok_or_else(|| QueryError::InvalidPath("empty path".into()))?;
    let ty = EntityType::from_set_name(&first.name).ok_or_else(|| QueryError::UnknownEntitySet(first.name.clone()))?;
    let mut current = match first.id {
        Some(id) => {
            let e = if ty.is_view() { view_entity(ctx.graph, ty, id) } else { ctx.graph.get(ty, id).cloned() };
            match e {
                Some(e) if readable(ctx, &e) => Resolved::Single(e),
                _ => return Err(QueryError::NotFound(EntityRef::new(ty, id))),
            }
        }
        None => {
            let items: Vec<Entity> = if ty.is_view() {
                views_of(ctx.graph, ty)
            } else {
                ctx.graph.iter(ty).cloned().collect()
            };
            Resolved::Collection { types: vec![ty], items: items.into_iter().filter(|e| readable(ctx, e)).collect() }
        }
    };
    for seg in &plan.path[1..] {
        let Resolved::Single(e) = &current else {
            return Err(QueryError::InvalidPath(format!("cannot navigate to `{}` from a collection", seg.name)));
        };
        let nav = resolve_nav(e.entity_type, &seg.name)?;
        let targets = follow(ctx, e, &nav);
        current = match seg.id {
            Some(id) => match targets.into_iter().find(|t| t.id == id) {
                Some(t) => Resolved::Single(t),
                None => return Err(QueryError::NotFound(EntityRef::new(nav.target_type(), id))),
            },
            None if nav.cardinality() == Cardinality::One => match targets.into_iter().next() {
                Some(t) => Resolved::Single(t),
                None => {
                    return Err(QueryError::InvalidPath(format!("{} of {} is not set", seg.name, e.entity_ref())))
                }
            },
            None => Resolved::Collection { types: nav.targets().to_vec(), items: targets },
        };
    }
    Ok(current)
}

/// Filters, orders, pages and renders a collection. `plan` is given for the
/// top level only and enables the default page size and `@iot.nextLink`.
fn collection(
    mut items: Vec<Entity>,
    types: &[EntityType],
    opts: &QueryOptions,
    ctx: &EvalContext<'_>,
    plan: Option<&QueryPlan>,
) -> Result<(Vec<Value>, Option<String>), QueryError> {
    if let Some(f) = &opts.filter {
        check_expr(types, f)?;
        let mut kept = Vec::with_capacity(items.len());
        for e in items {
            if eval_expr(&e, f, ctx) {
                kept.push(e);
            }
        }
        items = kept;
    }
    for k in &opts.order_by {
        check_path(types, &k.path.0)?;
    }
    sort_entities(&mut items, &opts.order_by, ctx);
    let total = items.len() as u64;
    let skip = opts.skip.unwrap_or(0);
    let page = match (plan.is_some(), opts.top) {
        (true, Some(t)) => t.min(DEFAULT_PAGE_SIZE),
        (true, None) => DEFAULT_PAGE_SIZE,
        (false, t) => t.unwrap_or(u64::MAX),
    };
    let start = skip.min(total) as usize;
    let end = skip.saturating_add(page).min(total) as usize;
    let mut out = Vec::with_capacity(end - start);
    for e in &items[start..end] {
        out.push(Value::Object(render_entity(e, opts, ctx)?));
    }
    let more = skip.saturating_add(page) < total && opts.top.is_none_or(|t| t > page);
    let next = match plan {
        Some(p) if more => {
            let mut np = p.clone();
            np.options.skip = Some(skip + page);
            np.options.top = opts.top.map(|t| t - page);
            Some(format!("{}/{}", ctx.service_root, np.to_url()))
        }
        _ => None,
    };
    Ok((out, next))
}

fn render_entity(e: &Entity, opts: &QueryOptions, ctx: &EvalContext<'_>) -> Result<Map<String, Value>, QueryError> {
    let select = if opts.select.is_empty() { None } else { Some(canonical_select(e.entity_type, &opts.select)?) };
    let mut out = render(e, RenderOptions { service_root: ctx.service_root, select: select.as_deref() });
    for node in &opts.expand {
        let nav = resolve_nav(e.entity_type, &node.name)?;
        let key = if nav.name.eq_ignore_ascii_case(&node.name) { nav.name.to_string() } else { node.name.clone() };
        let targets = follow(ctx, e, &nav);
        let v = if nav.cardinality() == Cardinality::One {
            match targets.into_iter().next() {
                Some(t) => Value::Object(render_entity(&t, &node.options, ctx)?),
                None => Value::Null,
            }
        } else {
            Value::Array(collection(targets, nav.targets(), &node.options, ctx, None)?.0)
        };
        out.insert(key, v);
    }
    Ok(out)
}

fn canonical_select(ty: EntityType, names: &[String]) -> Result<Vec<String>, QueryError> {
    let mut out = Vec::new();
    for n in names {
        if is_id(n) || n.eq_ignore_ascii_case("@iot.selfLink") {
            continue;
        }
        if let Some(f) = ty.field(n).filter(|f| f.kind != FieldKind::Secret) {
            out.push(f.name.to_string());
        } else if let Some(nav) = navigation(ty, n) {
            out.push(nav.name.to_string());
        } else {
            return Err(QueryError::UnknownProperty { entity_type: ty.name().into(), path: n.clone() });
        }
    }
    Ok(out)
}

fn is_id(name: &str) -> bool {
    name.eq_ignore_ascii_case("id") || name.eq_ignore_ascii_case("@iot.id")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum StaticKind {
    Num,
    Str,
    Bool,
    Time,
    Dynamic,
}

fn field_kind(kind: FieldKind) -> StaticKind {
    match kind {
        FieldKind::Text | FieldKind::LengthUnit => StaticKind::Str,
        FieldKind::Number => StaticKind::Num,
        FieldKind::Boolean => StaticKind::Bool,
        FieldKind::Time => StaticKind::Time,
        FieldKind::Object | FieldKind::Result | FieldKind::Geometry | FieldKind::Secret => StaticKind::Dynamic,
    }
}

/// Checks that a property path exists on at least one of `types`.
fn check_path(types: &[EntityType], path: &[String]) -> Result<StaticKind, QueryError> {
    let mut first_err = None;
    for ty in types {
        match check_path_on(*ty, path) {
            Ok(k) => return Ok(k),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.unwrap_or_else(|| QueryError::InvalidPath(path.join("/"))))
}

fn check_path_on(ty: EntityType, path: &[String]) -> Result<StaticKind, QueryError> {
    let unknown = || QueryError::UnknownProperty { entity_type: ty.name().into(), path: path.join("/") };
    let (head, rest) = path.split_first().ok_or_else(unknown)?;
    if is_id(head) {
        return if rest.is_empty() { Ok(StaticKind::Num) } else { Err(unknown()) };
    }
    if let Some(f) = ty.field(head) {
        return match (f.kind, rest.is_empty()) {
            (FieldKind::Secret, _) => Err(unknown()),
            (k, true) => Ok(field_kind(k)),
            (FieldKind::Object | FieldKind::Result, false) => Ok(StaticKind::Dynamic),
            _ => Err(unknown()),
        };
    }
    if let Some(nav) = navigation(ty, head) {
        if rest.is_empty() {
            return Err(QueryError::InvalidPath(format!("`{}` ends in a navigation, not a property", path.join("/"))));
        }
        return check_path(nav.targets(), rest);
    }
    Err(unknown())
}

fn literal_kind(l: &Literal) -> Option<StaticKind> {
    match l {
        Literal::Null => None,
        Literal::Bool(_) => Some(StaticKind::Bool),
        Literal::Number(_) => Some(StaticKind::Num),
        Literal::Text(_) => Some(StaticKind::Str),
        Literal::DateTime(_) => Some(StaticKind::Time),
    }
}

fn compatible(a: StaticKind, b: StaticKind) -> bool {
    use StaticKind as K;
    match (a, b) {
        (K::Dynamic, _) | (_, K::Dynamic) => true,
        (K::Time, K::Str) | (K::Str, K::Time) => true,
        _ => a == b,
    }
}

fn kind_name(k: Option<StaticKind>) -> String {
    match k {
        Some(StaticKind::Num) => "number",
        Some(StaticKind::Str) => "text",
        Some(StaticKind::Bool) => "boolean",
        Some(StaticKind::Time) => "timestamp",
        Some(StaticKind::Dynamic) => "value",
        None => "null",
    }
    .into()
}

fn check_expr(types: &[EntityType], e: &Expr) -> Result<(), QueryError> {
    match e {
        Expr::And(a, b) | Expr::Or(a, b) => {
            check_expr(types, a)?;
            check_expr(types, b)
        }
        Expr::Compare { left, op, right } => {
            let kind = |o: &Operand| -> Result<Option<StaticKind>, QueryError> {
                match o {
                    Operand::Literal(l) => Ok(literal_kind(l)),
                    Operand::Path(p) => check_path(types, &p.0).map(Some),
                }
            };
            let (l, r) = (kind(left)?, kind(right)?);
            if op.is_ordering() {
                if let (Some(a), Some(b)) = (l, r) {
                    if !compatible(a, b) {
                        return Err(QueryError::TypeMismatch { left: kind_name(l), right: kind_name(r), op: *op });
                    }
                }
            }
            Ok(())
        }
    }
}

fn eval_expr(e: &Entity, expr: &Expr, ctx: &EvalContext<'_>) -> bool {
    match expr {
        Expr::And(a, b) => eval_expr(e, a, ctx) && eval_expr(e, b, ctx),
        Expr::Or(a, b) => eval_expr(e, a, ctx) || eval_expr(e, b, ctx),
        Expr::Compare { left, op, right } => {
            let l = operand_values(e, left, ctx);
            if l.is_empty() {
                return false;
            }
            let r = operand_values(e, right, ctx);
            l.iter().any(|a| r.iter().any(|b| compare(a, *op, b)))
        }
    }
}

/// Runtime scalar used by comparisons.
#[derive(Clone, Debug, PartialEq)]
enum Scalar {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
    Time(DateTime<FixedOffset>),
    Other(Value),
}

impl Scalar {
    fn from_json(v: &Value) -> Scalar {
        match v {
            Value::Null => Scalar::Null,
            Value::Bool(b) => Scalar::Bool(*b),
            Value::Number(n) => n.as_f64().map_or(Scalar::Null, Scalar::Num),
            Value::String(s) => Scalar::Str(s.clone()),
            other => Scalar::Other(other.clone()),
        }
    }

    fn from_literal(l: &Literal) -> Scalar {
        match l {
            Literal::Null => Scalar::Null,
            Literal::Bool(b) => Scalar::Bool(*b),
            Literal::Number(n) => Scalar::Num(*n),
            Literal::Text(s) => Scalar::Str(s.clone()),
            Literal::DateTime(t) => Scalar::Time(*t),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Scalar::Null => 0,
            Scalar::Bool(_) => 1,
            Scalar::Num(_) => 2,
            Scalar::Time(_) => 3,
            Scalar::Str(_) => 4,
            Scalar::Other(_) => 5,
        }
    }
}

/// Parses a timestamp, or the start of a `start/end` interval.
fn as_time(s: &str) -> Option<DateTime<FixedOffset>> {
    let head = s.split('/').next().unwrap_or(s);
    DateTime::parse_from_rfc3339(head.trim()).ok()
}

fn compare(a: &Scalar, op: CompareOp, b: &Scalar) -> bool {
    let ord = match (a, b) {
        (Scalar::Null, Scalar::Null) => Some(Ordering::Equal),
        (Scalar::Null, _) | (_, Scalar::Null) => None,
        (Scalar::Num(x), Scalar::Num(y)) => x.partial_cmp(y),
        (Scalar::Str(x), Scalar::Str(y)) => Some(x.cmp(y)),
        (Scalar::Bool(x), Scalar::Bool(y)) => Some(x.cmp(y)),
        (Scalar::Time(x), Scalar::Time(y)) => Some(x.cmp(y)),
        (Scalar::Time(x), Scalar::Str(y)) => as_time(y).map(|y| x.cmp(&y)),
        (Scalar::Str(x), Scalar::Time(y)) => as_time(x).map(|x| x.cmp(y)),
        (Scalar::Other(x), Scalar::Other(y)) if x == y => Some(Ordering::Equal),
        _ => None,
    };
    match op {
        CompareOp::Eq => ord == Some(Ordering::Equal),
        CompareOp::Ne => ord != Some(Ordering::Equal),
        _ if matches!(a, Scalar::Null | Scalar::Other(_)) || matches!(b, Scalar::Null | Scalar::Other(_)) => false,
        CompareOp::Gt => ord == Some(Ordering::Greater),
        CompareOp::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
        CompareOp::Lt => ord == Some(Ordering::Less),
        CompareOp::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
    }
}

fn operand_values(e: &Entity, o: &Operand, ctx: &EvalContext<'_>) -> Vec<Scalar> {
    match o {
        Operand::Literal(l) => vec![Scalar::from_literal(l)],
        Operand::Path(p) => path_values(e, &p.0, ctx),
    }
}

/// Every value reachable along `path`; navigation over to-many relations
/// fans out. Absent fields read as null.
fn path_values(e: &Entity, path: &[String], ctx: &EvalContext<'_>) -> Vec<Scalar> {
    let Some((head, rest)) = path.split_first() else { return Vec::new() };
    if is_id(head) {
        return vec![Scalar::Num(e.id.0 as f64)];
    }
    if let Some(f) = e.entity_type.field(head) {
        if f.kind == FieldKind::Secret {
            return Vec::new();
        }
        let mut v = e.fields.get(f.name).cloned().unwrap_or(Value::Null);
        for key in rest {
            v = match &v {
                Value::Object(m) => m
                    .get(key)
                    .or_else(|| m.iter().find(|(k, _)| k.eq_ignore_ascii_case(key)).map(|(_, x)| x))
                    .cloned()
                    .unwrap_or(Value::Null),
                _ => Value::Null,
            };
        }
        return vec![Scalar::from_json(&v)];
    }
    match navigation(e.entity_type, head) {
        Some(nav) => follow(ctx, e, &nav).iter().flat_map(|t| path_values(t, rest, ctx)).collect(),
        None => Vec::new(),
    }
}

fn sort_key(e: &Entity, path: &PropertyPath, ctx: &EvalContext<'_>) -> Scalar {
    path_values(e, &path.0, ctx).into_iter().next().unwrap_or(Scalar::Null)
}

fn total_cmp(a: &Scalar, b: &Scalar) -> Ordering {
    match (a, b) {
        (Scalar::Num(x), Scalar::Num(y)) => x.total_cmp(y),
        (Scalar::Str(x), Scalar::Str(y)) => x.cmp(y),
        (Scalar::Bool(x), Scalar::Bool(y)) => x.cmp(y),
        (Scalar::Time(x), Scalar::Time(y)) => x.cmp(y),
        (Scalar::Other(x), Scalar::Other(y)) => x.to_string().cmp(&y.to_string()),
        _ => a.rank().cmp(&b.rank()),
    }
}

fn sort_entities(items: &mut [Entity], keys: &[OrderKey], ctx: &EvalContext<'_>) {
    if keys.is_empty() {
        items.sort_by_key(|e| e.id);
        return;
    }
    let mut keyed: Vec<(Vec<Scalar>, Entity)> = items
        .iter()
        .map(|e| (keys.iter().map(|k| sort_key(e, &k.path, ctx)).collect(), e.clone()))
        .collect();
    keyed.sort_by(|(ka, ea), (kb, eb)| {
        for (i, k) in keys.iter().enumerate() {
            let o = total_cmp(&ka[i], &kb[i]);
            let o = if k.direction == SortDirection::Desc { o.reverse() } else { o };
            if o != Ordering::Equal {
                return o;
            }
        }
        ea.id.cmp(&eb.id)
    });
    for (slot, (_, e)) in items.iter_mut().zip(keyed) {
        *slot = e;
    }
}
