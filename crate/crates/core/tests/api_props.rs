//! Access control and HTTP-layer properties over random graphs: grant
//! monotonicity, password opacity, read-form re-parsing, POST/GET
//! round trips and anonymous visibility.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use borelog_core::access::{authorize, authorize_entity, Action, RoleName, Target};
use borelog_core::api::{Api, ApiRequest, Method};
use borelog_core::model::wire::parse_document;
use borelog_core::model::{navigations, EntityId, EntityRef, EntityType};
use borelog_core::{project_scope, EntityGraph, Principal, Store};
use common::{ops, run, Op};
use proptest::prelude::*;
use serde_json::{json, Value};

const ACTIONS: [Action; 5] = [Action::Create, Action::Read, Action::Update, Action::Delete, Action::Admin];

/// Adds the five roles and `passwords.len()` users, each with random
/// global roles and project grants.
fn add_users(store: &Store, passwords: &[String], grants: &[(u8, Vec<(usize, u8)>)]) -> Vec<(String, String)> {
    let sys = Principal::system();
    let roles: BTreeMap<RoleName, EntityId> = RoleName::ALL
        .iter()
        .map(|r| (*r, store.create("Roles", &json!({"name": r.as_str()}), &sys).unwrap().id))
        .collect();
    let projects: Vec<EntityId> = store.graph().iter(EntityType::Project).map(|p| p.id).collect();
    let mut out = Vec::new();
    for (i, (pw, (global, per_project))) in passwords.iter().zip(grants).enumerate() {
        let username = format!("user{i}");
        let global: Vec<Value> = RoleName::ALL
            .iter()
            .enumerate()
            .filter(|(b, _)| global & (1 << b) != 0)
            .map(|(_, r)| json!({"@iot.id": roles[r].0}))
            .collect();
        let u = store.create("Users", &json!({"username": username, "password": pw, "Roles": global}), &sys).unwrap();
        for (p, mask) in per_project {
            for (b, r) in RoleName::ALL.iter().enumerate() {
                if mask & (1 << b) != 0 {
                    let doc = json!({"User": {"@iot.id": u.id.0}, "Project": {"@iot.id": projects[p % projects.len()].0},
                                     "Role": {"@iot.id": roles[r].0}});
                    // Duplicate grants are refused; that is fine here.
                    let _ = store.create("UserProjectRoles", &doc, &sys);
                }
            }
        }
        out.push((username, pw.clone()));
    }
    out
}

fn grants() -> impl Strategy<Value = Vec<(u8, Vec<(usize, u8)>)>> {
    proptest::collection::vec(
        (prop_oneof![3 => Just(0u8), 1 => 0u8..32], proptest::collection::vec((any::<usize>(), 1u8..32), 0..3)),
        3,
    )
}

fn with_role_ids(mut p: Principal, g: &EntityGraph) -> Principal {
    let held: BTreeSet<RoleName> =
        p.global_roles.iter().chain(p.project_grants.values().flatten()).copied().collect();
    p.role_ids = g
        .iter(EntityType::Role)
        .filter(|r| r.name().and_then(RoleName::parse).is_some_and(|n| held.contains(&n)))
        .map(|r| r.id)
        .collect();
    p
}

/// Every decision the principal can be asked about in this graph: each
/// stored entity under each action, plus creation in every scope.
fn decisions(p: &Principal, g: &EntityGraph) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    for e in g.all() {
        for a in ACTIONS {
            out.push((format!("{a:?} {}", e.entity_ref()), authorize_entity(p, a, e, g).is_allowed()));
        }
    }
    let scopes: Vec<BTreeSet<EntityId>> = std::iter::once(BTreeSet::new())
        .chain(g.iter(EntityType::Project).map(|p| [p.id].into_iter().collect()))
        .collect();
    for ty in EntityType::stored() {
        for s in &scopes {
            let d = authorize(p, Action::Create, Target { entity_type: ty, scope: s, subject: None }, g);
            out.push((format!("Create {ty:?} in {s:?}"), d.is_allowed()));
        }
    }
    out
}

/// Every `Set(id)` self link anywhere in a response body.
fn self_links(v: &Value, out: &mut Vec<EntityRef>) {
    match v {
        Value::Object(m) => {
            if let Some(link) = m.get("@iot.selfLink").and_then(Value::as_str) {
                let tail = link.rsplit('/').next().unwrap();
                let (set, id) = tail.trim_end_matches(')').split_once('(').unwrap();
                out.push(EntityRef::new(EntityType::from_set_name(set).unwrap(), EntityId(id.parse().unwrap())));
            }
            m.values().for_each(|c| self_links(c, out));
        }
        Value::Array(a) => a.iter().for_each(|c| self_links(c, out)),
        _ => {}
    }
}

/// Reads every set (with some expansions) as `req` would.
fn sweep(api: &Api, auth: Option<(&str, &str)>) -> Vec<Value> {
    let mut targets: Vec<String> = EntityType::ALL.iter().map(|t| format!("/v1.1/{}", t.set_name())).collect();
    targets.extend(
        [
            "/v1.1/Users?$expand=Roles,UserProjectRoles($expand=User,Project)",
            "/v1.1/UserProjectRoles?$expand=User($expand=Roles)",
            "/v1.1/Roles?$expand=Users,UserProjectRoles",
            "/v1.1/Projects?$expand=Users,UserProjectRoles($expand=User)",
            "/v1.1/Observations?$expand=Datastream($expand=Thing,Sensor),FeatureOfInterest($expand=BhSampling)",
            "/v1.1/BhCollarThings?$expand=BhTrajectoryThings($expand=BhSamplings),Projects",
            "/v1.1/Sensors?$expand=Datastreams,Projects",
        ]
        .map(String::from),
    );
    let mut out = Vec::new();
    for t in targets {
        let mut req = ApiRequest::get(t.clone());
        if let Some((u, p)) = auth {
            req = req.basic_auth(u, p);
        }
        let r = api.handle(&req);
        if r.status == 200 {
            let body = r.body.unwrap();
            let items: Vec<Value> = body["value"].as_array().cloned().unwrap_or_default();
            for item in &items {
                if let Some(link) = item["@iot.selfLink"].as_str() {
                    let path = &link[link.find("/v1.1").unwrap()..];
                    let mut one = ApiRequest::get(path);
                    if let Some((u, p)) = auth {
                        one = one.basic_auth(u, p);
                    }
                    out.extend(api.handle(&one).body);
                }
            }
            out.push(body);
        }
    }
    out
}

/// `got` carries everything in `posted`; objects may gain server-added keys.
fn covers(got: &Value, posted: &Value) -> bool {
    match (got, posted) {
        (Value::Object(g), Value::Object(p)) => p.iter().all(|(k, v)| g.get(k).is_some_and(|gv| covers(gv, v))),
        _ => got == posted,
    }
}

/// Splits a body into the read forms of every entity it contains: each
/// expanded relation is cut out of its parent and yielded on its own.
fn entity_documents(v: &Value, out: &mut Vec<(EntityType, Value)>) {
    match v {
        Value::Object(m) if m.contains_key("@iot.selfLink") => {
            let mut refs = Vec::new();
            self_links(&json!({ "@iot.selfLink": m["@iot.selfLink"] }), &mut refs);
            let ty = refs[0].entity_type;
            let mut own = m.clone();
            for nav in navigations(ty) {
                let key = m.keys().find(|k| k.eq_ignore_ascii_case(nav.name)).cloned();
                if let Some(embedded) = key.and_then(|k| own.remove(&k)) {
                    entity_documents(&embedded, out);
                }
            }
            out.push((ty, Value::Object(own)));
        }
        Value::Object(m) => m.values().for_each(|c| entity_documents(c, out)),
        Value::Array(a) => a.iter().for_each(|c| entity_documents(c, out)),
        _ => {}
    }
}

fn password() -> impl Strategy<Value = String> {
    "[A-Za-z0-9]{12,20}"
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_grant_never_revokes(
        stream in ops(30),
        user in proptest::option::of(0usize..3),
        global in 0u8..32,
        per_project in proptest::collection::vec((any::<usize>(), 0u8..32), 0..3),
        added in (any::<bool>(), any::<usize>(), 0usize..5),
        passwords in proptest::collection::vec(password(), 3),
        users in grants(),
    ) {
        let (store, _) = run(Store::in_memory(), &stream);
        add_users(&store, &passwords, &users);
        let g = store.graph();
        let projects: Vec<EntityId> = g.iter(EntityType::Project).map(|p| p.id).collect();
        let user_ids: Vec<EntityId> = g.iter(EntityType::User).map(|u| u.id).collect();
        let mask = |m: u8| -> BTreeSet<RoleName> {
            RoleName::ALL.iter().enumerate().filter(|(b, _)| m & (1 << b) != 0).map(|(_, r)| *r).collect()
        };
        let mut base = Principal { user: user.map(|u| user_ids[u]), global_roles: mask(global), ..Principal::anonymous() };
        for (p, m) in &per_project {
            base.project_grants.entry(projects[p % projects.len()]).or_default().extend(mask(*m));
        }
        let mut more = base.clone();
        let role = RoleName::ALL[added.2];
        if added.0 {
            more.global_roles.insert(role);
        } else {
            more.project_grants.entry(projects[added.1 % projects.len()]).or_default().insert(role);
        }
        let (base, more) = (with_role_ids(base, &g), with_role_ids(more, &g));
        for ((what, before), (_, after)) in decisions(&base, &g).into_iter().zip(decisions(&more, &g)) {
            prop_assert!(!before || after, "granting {:?} revoked {}", role, what);
        }
    }

    #[test]
    fn passwords_never_leave_the_server(
        stream in ops(25),
        passwords in proptest::collection::vec(password(), 3),
        users in grants(),
        who in 0usize..5,
    ) {
        let (store, _) = run(Store::in_memory(), &stream);
        let creds = add_users(&store, &passwords, &users);
        let api = Api::new(Arc::new(store), "http://x");
        let auth = creds.get(who).map(|(u, p)| (u.as_str(), p.as_str()));
        let bodies = if who == 4 {
            // Global admin through the embedded system principal.
            let mut out = Vec::new();
            for t in ["/v1.1/Users", "/v1.1/Users?$expand=Roles,UserProjectRoles", "/v1.1/Roles?$expand=Users"] {
                out.extend(api.handle_as(&ApiRequest::get(t), &Principal::system()).body);
            }
            out
        } else {
            sweep(&api, auth)
        };
        let mut saw_user = false;
        for b in &bodies {
            let text = b.to_string();
            saw_user |= text.contains("\"username\"");
            prop_assert!(!text.contains("\"password") && !text.contains("sha256$"), "{}", text);
            for pw in &passwords {
                prop_assert!(!text.contains(pw.as_str()));
            }
        }
        // Admins and every user reading their own record must see users at all.
        if who == 4 {
            prop_assert!(saw_user);
        }
    }

    #[test]
    fn get_bodies_reparse(stream in ops(40)) {
        let (store, _) = run(Store::in_memory(), &stream);
        let api = Api::new(Arc::new(store), "http://x");
        for body in sweep(&api, None).into_iter().chain(
            EntityType::ALL.iter().flat_map(|t| api.handle_as(&ApiRequest::get(format!("/v1.1/{}", t.set_name())), &Principal::system()).body)
        ) {
            let mut docs = Vec::new();
            entity_documents(&body, &mut docs);
            for (ty, item) in docs {
                let draft = parse_document(ty, &item);
                prop_assert!(draft.problems.is_empty(), "{}: {:?}", item, draft.problems);
            }
        }
    }

    #[test]
    fn anonymous_sees_only_public_project_data(
        stream in ops(50).prop_map(|mut s| { s.push(Op::Publish { project: 0, public: true }); s }),
        passwords in proptest::collection::vec(password(), 3),
        users in grants(),
    ) {
        let (store, _) = run(Store::in_memory(), &stream);
        add_users(&store, &passwords, &users);
        let g = store.graph();
        let public: BTreeSet<EntityId> = g
            .iter(EntityType::Project)
            .filter(|p| p.field("public") == Some(&json!(true)))
            .map(|p| p.id)
            .collect();
        let api = Api::new(Arc::new(store), "http://x");
        let mut seen = Vec::new();
        for b in sweep(&api, None) {
            self_links(&b, &mut seen);
        }
        // The sweep is not vacuous: every public collar shows up.
        for c in g.iter(EntityType::BhCollarThing) {
            if !project_scope(c, &g).is_disjoint(&public) {
                prop_assert!(seen.contains(&c.entity_ref()), "public {} not listed", c.entity_ref());
            }
        }
        for r in seen {
            let e = g.get_ref(r).map(|e| e.clone()).or_else(|| borelog_core::model::view_entity(&g, r.entity_type, r.id)).unwrap();
            match r.entity_type {
                EntityType::ObservedProperty | EntityType::BhFeatureType => {}
                EntityType::Project => prop_assert!(public.contains(&r.id), "private project {} visible", r),
                EntityType::User | EntityType::Role | EntityType::UserProjectRole => {
                    prop_assert!(false, "{} visible to anonymous", r)
                }
                _ => {
                    let scope = project_scope(&e, &g);
                    prop_assert!(!scope.is_disjoint(&public), "{} in {:?} visible; public {:?}", r, scope, public);
                }
            }
        }
    }

    #[test]
    fn post_then_get_returns_posted_fields(
        name in "[A-Za-z0-9][A-Za-z0-9 ]{0,11}",
        description in proptest::option::of("[a-z ]{0,20}"),
        props in proptest::collection::btree_map("[a-z]{1,6}", prop_oneof![
            any::<i32>().prop_map(Value::from),
            any::<bool>().prop_map(Value::from),
            "[a-z]{0,5}".prop_map(Value::from),
        ], 0..4),
        result in prop_oneof![any::<i32>().prop_map(Value::from), "[a-z]{1,5}".prop_map(Value::from), Just(Value::Null)],
    ) {
        let (store, _) = run(Store::in_memory(), &[]);
        let g = store.graph();
        let id = |ty| g.iter(ty).next().unwrap().id.0;
        let (project, ds, foi) = (id(EntityType::Project), id(EntityType::Datastream), id(EntityType::BhFeatureOfInterest));
        let api = Api::new(Arc::new(store), "http://x");
        let mut collar = json!({"name": name, "properties": props, "Projects": [{"@iot.id": project}]});
        if let Some(d) = description {
            collar["description"] = json!(d);
        }
        let posts = [
            ("BhCollarThings", collar),
            ("Sensors", json!({"name": name, "metadata": "m", "encodingType": "text/plain", "properties": props})),
            ("ObservedProperties", json!({"name": name, "definition": "urn:x"})),
            ("Observations", json!({"result": result, "parameters": props,
                                    "Datastream": {"@iot.id": ds}, "FeatureOfInterest": {"@iot.id": foi}})),
        ];
        for (set, doc) in posts {
            let r = api.handle_as(&ApiRequest::with_body(Method::Post, format!("/v1.1/{set}"), &doc), &Principal::system());
            prop_assert_eq!(r.status, 201, "{} {:?}", set, r.body);
            let location = r.header("Location").unwrap().to_string();
            let got = api.handle_as(&ApiRequest::get(&location[location.find("/v1.1").unwrap()..]), &Principal::system());
            prop_assert_eq!(got.status, 200);
            let got = got.body.unwrap();
            for (k, v) in doc.as_object().unwrap() {
                if v.get("@iot.id").is_some() || v.as_array().is_some_and(|a| a.iter().any(|x| x.get("@iot.id").is_some())) {
                    prop_assert!(got.get(format!("{k}@iot.navigationLink")).is_some(), "{} lacks link {}", set, k);
                } else {
                    prop_assert!(got.get(k).is_some_and(|g| covers(g, v)), "{} field {}: {:?}", set, k, got.get(k));
                }
            }
            prop_assert!(got["@iot.id"].is_u64() && got["@iot.selfLink"].is_string());
        }
    }
}
