//! GEXF 1.2 export of the reciprocal network with a `community` node
//! attribute, plus a structural validator used to check exports.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::graph::{NodeMetadata, UndirectedGraph};

pub const GEXF_NAMESPACE: &str = "http://www.gexf.net/1.2draft";

/// Nodes with degree below `min_degree` are left out with their edges.
/// Nodes missing from `p` get community `-1`. Labels come from `names` when
/// given, else the user id.
pub fn export_gexf(
    g: &UndirectedGraph,
    p: &Partition,
    min_degree: usize,
    names: Option<&NodeMetadata>,
) -> String {
    let keep: Vec<bool> = (0..g.node_count()).map(|i| g.degree(i) >= min_degree).collect();
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<gexf xmlns=\"{GEXF_NAMESPACE}\" version=\"1.2\">");
    out.push_str("  <meta>\n    <creator>echoscope</creator>\n  </meta>\n");
    out.push_str("  <graph mode=\"static\" defaultedgetype=\"undirected\">\n");
    out.push_str("    <attributes class=\"node\">\n");
    out.push_str("      <attribute id=\"0\" title=\"community\" type=\"integer\"/>\n");
    out.push_str("    </attributes>\n");
    out.push_str("    <nodes>\n");
    for (i, &u) in g.nodes().iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let label = names
            .and_then(|m| m.screen_names.get(&u))
            .map(|s| escape(s.as_str()).into_owned())
            .unwrap_or_else(|| u.to_string());
        let community = p.community_of(u).map_or(-1, |c| c as i64);
        let _ = writeln!(
            out,
            "      <node id=\"{u}\" label=\"{label}\">\n        <attvalues>\n          <attvalue for=\"0\" value=\"{community}\"/>\n        </attvalues>\n      </node>"
        );
    }
    out.push_str("    </nodes>\n");
    out.push_str("    <edges>\n");
    let mut id = 0usize;
    for (a, b) in g.index_edges() {
        if keep[a] && keep[b] {
            let _ = writeln!(
                out,
                "      <edge id=\"{id}\" source=\"{}\" target=\"{}\"/>",
                g.nodes()[a],
                g.nodes()[b]
            );
            id += 1;
        }
    }
    out.push_str("    </edges>\n");
    out.push_str("  </graph>\n</gexf>\n");
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GexfAttribute {
    pub id: String,
    pub title: String,
    pub kind: String,
}

/// What a validated document contains.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GexfSummary {
    pub default_edge_type: String,
    pub node_attributes: Vec<GexfAttribute>,
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
    /// `(node id, attribute id) -> value`
    pub attvalues: HashMap<(String, String), String>,
}

const ATTR_TYPES: [&str; 8] = [
    "integer", "long", "double", "float", "boolean", "string", "liststring", "anyURI",
];

fn attrs(e: &BytesStart<'_>) -> Result<HashMap<String, String>> {
    let mut out = HashMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| Error::Gexf(err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| Error::Gexf(err.to_string()))?
            .into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn require<'a>(map: &'a HashMap<String, String>, key: &str, element: &str) -> Result<&'a str> {
    map.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Gexf(format!("<{element}> missing `{key}`")))
}

/// Parses a GEXF document and checks the structure a 1.2 reader relies on:
/// a `gexf` root with version 1.2 and the 1.2 namespace, one `graph` with a
/// valid edge type, declared attributes with known types, unique node ids,
/// edges whose endpoints exist, and attribute values that reference a
/// declared attribute and parse as its type.
pub fn validate_gexf(text: &str) -> Result<GexfSummary> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut stack: Vec<String> = Vec::new();
    let mut summary = GexfSummary::default();
    let mut node_ids: HashSet<String> = HashSet::new();
    let mut edge_ids: HashSet<String> = HashSet::new();
    let mut attr_class = String::new();
    let mut current_node: Option<String> = None;
    let mut graphs = 0;
    let mut seen_root = false;
    let mut pending_edges: Vec<(String, String)> = Vec::new();

    loop {
        let ev = reader
            .read_event()
            .map_err(|e| Error::Gexf(format!("at byte {}: {e}", reader.buffer_position())))?;
        let (start, empty) = match &ev {
            Event::Start(e) => (Some(e.clone()), false),
            Event::Empty(e) => (Some(e.clone()), true),
            Event::End(_) => {
                if stack.pop().as_deref() == Some("node") {
                    current_node = None;
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let e = start.expect("start or empty");
        let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
        let parent = stack.last().map(String::as_str);
        let a = attrs(&e)?;
        match (parent, name.as_str()) {
            (None, "gexf") => {
                if seen_root {
                    return Err(Error::Gexf("multiple root elements".into()));
                }
                seen_root = true;
                if require(&a, "version", "gexf")? != "1.2" {
                    return Err(Error::Gexf("version must be 1.2".into()));
                }
                let ns = require(&a, "xmlns", "gexf")?;
                if !ns.contains("gexf.net/1.2") {
                    return Err(Error::Gexf(format!("unexpected namespace {ns}")));
                }
            }
            (None, other) => return Err(Error::Gexf(format!("root must be <gexf>, got <{other}>"))),
            (Some("gexf"), "meta") => {}
            (Some("meta"), _) => {}
            (Some(p), _) if stack.iter().any(|s| s == "meta") && p != "gexf" => {}
            (Some("gexf"), "graph") => {
                graphs += 1;
                let t = a.get("defaultedgetype").map_or("undirected", String::as_str);
                if !["directed", "undirected", "mutual"].contains(&t) {
                    return Err(Error::Gexf(format!("bad defaultedgetype {t}")));
                }
                summary.default_edge_type = t.to_string();
            }
            (Some("graph"), "attributes") => {
                attr_class = require(&a, "class", "attributes")?.to_string();
                if attr_class != "node" && attr_class != "edge" {
                    return Err(Error::Gexf(format!("bad attribute class {attr_class}")));
                }
            }
            (Some("attributes"), "attribute") => {
                let kind = require(&a, "type", "attribute")?;
                if !ATTR_TYPES.contains(&kind) {
                    return Err(Error::Gexf(format!("unknown attribute type {kind}")));
                }
                let attr = GexfAttribute {
                    id: require(&a, "id", "attribute")?.to_string(),
                    title: require(&a, "title", "attribute")?.to_string(),
                    kind: kind.to_string(),
                };
                if attr_class == "node" {
                    if summary.node_attributes.iter().any(|x| x.id == attr.id) {
                        return Err(Error::Gexf(format!("duplicate attribute id {}", attr.id)));
                    }
                    summary.node_attributes.push(attr);
                }
            }
            (Some("attribute"), "default" | "options") => {}
            (Some("graph"), "nodes" | "edges") => {}
            (Some("nodes"), "node") => {
                let id = require(&a, "id", "node")?.to_string();
                if !node_ids.insert(id.clone()) {
                    return Err(Error::Gexf(format!("duplicate node id {id}")));
                }
                summary.nodes.push(id.clone());
                if !empty {
                    current_node = Some(id);
                }
            }
            (Some("node"), "attvalues") => {}
            (Some("attvalues"), "attvalue") => {
                let node = current_node
                    .clone()
                    .ok_or_else(|| Error::Gexf("<attvalue> outside a node".into()))?;
                let key = require(&a, "for", "attvalue")?;
                let value = require(&a, "value", "attvalue")?;
                let decl = summary
                    .node_attributes
                    .iter()
                    .find(|x| x.id == key)
                    .ok_or_else(|| Error::Gexf(format!("attvalue for undeclared attribute {key}")))?;
                let ok = match decl.kind.as_str() {
                    "integer" | "long" => value.parse::<i64>().is_ok(),
                    "double" | "float" => value.parse::<f64>().is_ok(),
                    "boolean" => value == "true" || value == "false",
                    _ => true,
                };
                if !ok {
                    return Err(Error::Gexf(format!("value {value:?} is not {}", decl.kind)));
                }
                summary
                    .attvalues
                    .insert((node, key.to_string()), value.to_string());
            }
            (Some("edges"), "edge") => {
                if let Some(id) = a.get("id") {
                    if !edge_ids.insert(id.clone()) {
                        return Err(Error::Gexf(format!("duplicate edge id {id}")));
                    }
                }
                pending_edges.push((
                    require(&a, "source", "edge")?.to_string(),
                    require(&a, "target", "edge")?.to_string(),
                ));
            }
            (Some("edge"), "attvalues") | (Some("attvalues"), _) => {}
            (Some(p), n) => return Err(Error::Gexf(format!("unexpected <{n}> inside <{p}>"))),
        }
        if !empty {
            stack.push(name);
        }
    }
    if !seen_root {
        return Err(Error::Gexf("no <gexf> root".into()));
    }
    if !stack.is_empty() {
        return Err(Error::Gexf("unclosed elements".into()));
    }
    if graphs != 1 {
        return Err(Error::Gexf(format!("expected one <graph>, found {graphs}")));
    }
    for (s, t) in &pending_edges {
        if !node_ids.contains(s) || !node_ids.contains(t) {
            return Err(Error::Gexf(format!("edge {s}-{t} references a missing node")));
        }
    }
    summary.edges = pending_edges;
    Ok(summary)
}
