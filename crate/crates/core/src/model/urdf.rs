//! URDF subset: one serial chain of revolute joints, diagonal inertias and
//! cylinder/box visuals.
//!
//! Friction follows the standard `<dynamics damping= friction=>` semantics
//! (viscous and Coulomb). The drive armature rides along as an extra
//! `armature=` attribute that other URDF consumers ignore.

use std::collections::HashMap;
use std::fmt::Write;

use roxmltree::{Document, Node};

use super::{JointSpec, JointTemplate, KinematicTemplate, LinkShape, LinkSpec, ModelError, RobotModel};

const BASE_LINK: &str = "base_link";
const EFFORT_LIMIT: f64 = 120.0;
const VELOCITY_LIMIT: f64 = 50.0;

fn triple(v: &[f64; 3]) -> String {
    format!("{} {} {}", v[0], v[1], v[2])
}

/// Writes the model as URDF. Floats use the shortest representation that
/// parses back to the identical value.
pub fn serialize_urdf(model: &RobotModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0"?>"#);
    let _ = writeln!(
        out,
        r#"<robot name="robot_{}" generation_seed="{}">"#,
        model.id, model.generation_seed
    );
    let _ = writeln!(out, r#"  <link name="{BASE_LINK}"/>"#);
    for (i, link) in model.links.iter().enumerate() {
        let [ixx, iyy, izz] = link.inertia;
        let _ = writeln!(out, r#"  <link name="link_{}">"#, i + 1);
        let _ = writeln!(out, "    <inertial>");
        let _ = writeln!(
            out,
            r#"      <origin xyz="{}" rpy="0 0 0"/>"#,
            triple(&link.com_position())
        );
        let _ = writeln!(out, r#"      <mass value="{}"/>"#, link.mass);
        let _ = writeln!(
            out,
            r#"      <inertia ixx="{ixx}" ixy="0" ixz="0" iyy="{iyy}" iyz="0" izz="{izz}"/>"#
        );
        let _ = writeln!(out, "    </inertial>");
        let _ = writeln!(out, "    <visual>");
        let _ = writeln!(
            out,
            r#"      <origin xyz="0 0 {}" rpy="0 0 0"/>"#,
            0.5 * link.length
        );
        let _ = writeln!(out, "      <geometry>");
        match link.shape {
            LinkShape::Cylinder => {
                let _ = writeln!(
                    out,
                    r#"        <cylinder radius="{}" length="{}"/>"#,
                    0.5 * link.diameter,
                    link.length
                );
            }
            LinkShape::Box => {
                let _ = writeln!(
                    out,
                    r#"        <box size="{} {} {}"/>"#,
                    link.diameter, link.diameter, link.length
                );
            }
        }
        let _ = writeln!(out, "      </geometry>");
        let _ = writeln!(out, "    </visual>");
        let _ = writeln!(out, "  </link>");
    }
    for (i, (jt, js)) in model.template.joints.iter().zip(&model.joints).enumerate() {
        let parent = if i == 0 {
            BASE_LINK.to_string()
        } else {
            format!("link_{i}")
        };
        let _ = writeln!(out, r#"  <joint name="joint_{}" type="revolute">"#, i + 1);
        let _ = writeln!(out, r#"    <parent link="{parent}"/>"#);
        let _ = writeln!(out, r#"    <child link="link_{}"/>"#, i + 1);
        let _ = writeln!(
            out,
            r#"    <origin xyz="{}" rpy="{}"/>"#,
            triple(&jt.origin_xyz),
            triple(&jt.origin_rpy)
        );
        let _ = writeln!(out, r#"    <axis xyz="{}"/>"#, triple(&jt.axis));
        let _ = writeln!(
            out,
            r#"    <limit lower="{}" upper="{}" effort="{EFFORT_LIMIT}" velocity="{VELOCITY_LIMIT}"/>"#,
            jt.lower, jt.upper
        );
        let _ = writeln!(
            out,
            r#"    <dynamics damping="{}" friction="{}" armature="{}"/>"#,
            js.mu_v, js.mu_c, jt.armature
        );
        let _ = writeln!(out, "  </joint>");
    }
    out.push_str("</robot>\n");
    out
}

struct Ctx<'a> {
    doc: &'a Document<'a>,
}

impl<'a> Ctx<'a> {
    fn malformed(&self, node: Node, msg: impl std::fmt::Display) -> ModelError {
        let pos = self.doc.text_pos_at(node.range().start);
        ModelError::Malformed(format!("line {}: <{}>: {msg}", pos.row, node.tag_name().name()))
    }

    fn attr(&self, node: Node<'a, 'a>, name: &str) -> Result<&'a str, ModelError> {
        node.attribute(name)
            .ok_or_else(|| self.malformed(node, format!("missing attribute `{name}`")))
    }

    fn number(&self, node: Node<'a, 'a>, name: &str) -> Result<f64, ModelError> {
        let raw = self.attr(node, name)?;
        parse_number(raw).ok_or_else(|| {
            self.malformed(node, format!("attribute `{name}`: `{raw}` is not a finite number"))
        })
    }

    fn optional_number(&self, node: Node<'a, 'a>, name: &str, default: f64) -> Result<f64, ModelError> {
        match node.attribute(name) {
            None => Ok(default),
            Some(_) => self.number(node, name),
        }
    }

    fn vector(&self, node: Node<'a, 'a>, name: &str, default: [f64; 3]) -> Result<[f64; 3], ModelError> {
        let Some(raw) = node.attribute(name) else {
            return Ok(default);
        };
        let parts: Option<Vec<f64>> = raw.split_whitespace().map(parse_number).collect();
        match parts.as_deref() {
            Some([x, y, z]) => Ok([*x, *y, *z]),
            _ => Err(self.malformed(node, format!("attribute `{name}`: `{raw}` is not a 3-vector"))),
        }
    }
}

fn parse_number(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn elements<'a, 'input>(node: Node<'a, 'input>) -> impl Iterator<Item = Node<'a, 'input>> {
    node.children().filter(|c| c.is_element())
}

fn child<'a, 'input>(node: Node<'a, 'input>, name: &str) -> Option<Node<'a, 'input>> {
    elements(node).find(|c| c.tag_name().name() == name)
}

fn origin(ctx: &Ctx, node: Node) -> Result<([f64; 3], [f64; 3]), ModelError> {
    match child(node, "origin") {
        None => Ok(([0.0; 3], [0.0; 3])),
        Some(o) => Ok((ctx.vector(o, "xyz", [0.0; 3])?, ctx.vector(o, "rpy", [0.0; 3])?)),
    }
}

struct ParsedLink {
    spec: Option<LinkSpec>,
}

fn parse_link(ctx: &Ctx, node: Node) -> Result<ParsedLink, ModelError> {
    for c in elements(node) {
        match c.tag_name().name() {
            "inertial" | "visual" | "collision" => {}
            other => return Err(ModelError::Unsupported(format!("element <{other}> in <link>"))),
        }
    }
    let inertial = child(node, "inertial");
    let visual = child(node, "visual");
    let (inertial, visual) = match (inertial, visual) {
        (None, None) => return Ok(ParsedLink { spec: None }),
        (Some(i), Some(v)) => (i, v),
        (None, Some(_)) => return Err(ctx.malformed(node, "missing <inertial> block")),
        (Some(_), None) => return Err(ctx.malformed(node, "missing <visual> geometry")),
    };

    let geometry = child(visual, "geometry")
        .ok_or_else(|| ctx.malformed(visual, "missing <geometry>"))?;
    let shape_node = elements(geometry)
        .next()
        .ok_or_else(|| ctx.malformed(geometry, "empty <geometry>"))?;
    let (shape, diameter, length) = match shape_node.tag_name().name() {
        "cylinder" => (
            LinkShape::Cylinder,
            2.0 * ctx.number(shape_node, "radius")?,
            ctx.number(shape_node, "length")?,
        ),
        "box" => {
            let size = ctx.vector(shape_node, "size", [f64::NAN; 3])?;
            if size[0] != size[1] {
                return Err(ModelError::Unsupported(
                    "box with non-square cross-section".into(),
                ));
            }
            (LinkShape::Box, size[0], size[2])
        }
        other => return Err(ModelError::Unsupported(format!("geometry <{other}>"))),
    };

    let (com, com_rpy) = origin(ctx, inertial)?;
    if com[0] != 0.0 || com[1] != 0.0 || com_rpy != [0.0; 3] {
        return Err(ModelError::Unsupported("COM off the link axis or rotated inertial frame".into()));
    }
    let mass_node = child(inertial, "mass").ok_or_else(|| ctx.malformed(inertial, "missing <mass>"))?;
    let mass = ctx.number(mass_node, "value")?;
    let inertia_node =
        child(inertial, "inertia").ok_or_else(|| ctx.malformed(inertial, "missing <inertia>"))?;
    for off in ["ixy", "ixz", "iyz"] {
        if ctx.optional_number(inertia_node, off, 0.0)? != 0.0 {
            return Err(ModelError::Unsupported(format!("non-diagonal inertia ({off})")));
        }
    }
    let inertia = [
        ctx.number(inertia_node, "ixx")?,
        ctx.number(inertia_node, "iyy")?,
        ctx.number(inertia_node, "izz")?,
    ];
    Ok(ParsedLink {
        spec: Some(LinkSpec {
            shape,
            diameter,
            length,
            mass,
            com_offset: com[2] - 0.5 * length,
            inertia,
        }),
    })
}

struct ParsedJoint<'a> {
    parent: &'a str,
    child: &'a str,
    template: JointTemplate,
    spec: JointSpec,
}

fn parse_joint<'a>(ctx: &Ctx<'a>, node: Node<'a, 'a>) -> Result<ParsedJoint<'a>, ModelError> {
    let kind = ctx.attr(node, "type")?;
    if kind != "revolute" {
        return Err(ModelError::Unsupported(format!("joint type `{kind}`")));
    }
    for c in elements(node) {
        match c.tag_name().name() {
            "parent" | "child" | "origin" | "axis" | "limit" | "dynamics" => {}
            other => return Err(ModelError::Unsupported(format!("element <{other}> in <joint>"))),
        }
    }
    let parent = child(node, "parent").ok_or_else(|| ctx.malformed(node, "missing <parent>"))?;
    let child_node = child(node, "child").ok_or_else(|| ctx.malformed(node, "missing <child>"))?;
    let (origin_xyz, origin_rpy) = origin(ctx, node)?;
    let axis = match child(node, "axis") {
        Some(a) => ctx.vector(a, "xyz", [1.0, 0.0, 0.0])?,
        None => [1.0, 0.0, 0.0],
    };
    let limit = child(node, "limit").ok_or_else(|| ctx.malformed(node, "revolute joint without <limit>"))?;
    let (damping, friction, armature) = match child(node, "dynamics") {
        Some(d) => (
            ctx.optional_number(d, "damping", 0.0)?,
            ctx.optional_number(d, "friction", 0.0)?,
            ctx.optional_number(d, "armature", 0.0)?,
        ),
        None => (0.0, 0.0, 0.0),
    };
    Ok(ParsedJoint {
        parent: ctx.attr(parent, "link")?,
        child: ctx.attr(child_node, "link")?,
        template: JointTemplate {
            axis,
            origin_xyz,
            origin_rpy,
            lower: ctx.number(limit, "lower")?,
            upper: ctx.number(limit, "upper")?,
            armature,
        },
        spec: JointSpec {
            mu_c: friction,
            mu_v: damping,
        },
    })
}

/// Parses the URDF subset written by [`serialize_urdf`].
pub fn parse_urdf(text: &str) -> Result<RobotModel, ModelError> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        ModelError::Parse {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let ctx = Ctx { doc: &doc };
    let root = doc.root_element();
    if root.tag_name().name() != "robot" {
        return Err(ModelError::Unsupported(format!(
            "root element <{}>",
            root.tag_name().name()
        )));
    }

    let mut links: HashMap<&str, ParsedLink> = HashMap::new();
    let mut joints: Vec<ParsedJoint> = Vec::new();
    for node in elements(root) {
        match node.tag_name().name() {
            "link" => {
                let name = ctx.attr(node, "name")?;
                if links.insert(name, parse_link(&ctx, node)?).is_some() {
                    return Err(ctx.malformed(node, format!("duplicate link `{name}`")));
                }
            }
            "joint" => joints.push(parse_joint(&ctx, node)?),
            other => return Err(ModelError::Unsupported(format!("element <{other}>"))),
        }
    }
    if joints.is_empty() {
        return Err(ModelError::Malformed("robot has no joints".into()));
    }

    // Walk the serial chain from the unique root link.
    let children: Vec<&str> = joints.iter().map(|j| j.child).collect();
    let roots: Vec<&str> = links
        .keys()
        .copied()
        .filter(|l| !children.contains(l))
        .collect();
    let [root_link] = roots.as_slice() else {
        return Err(ModelError::Malformed(format!(
            "expected one root link, found {}",
            roots.len()
        )));
    };
    let mut by_parent: HashMap<&str, usize> = HashMap::new();
    for (i, j) in joints.iter().enumerate() {
        if !links.contains_key(j.parent) || !links.contains_key(j.child) {
            return Err(ModelError::Malformed(format!(
                "joint references unknown link `{}` or `{}`",
                j.parent, j.child
            )));
        }
        if by_parent.insert(j.parent, i).is_some() {
            return Err(ModelError::Unsupported(format!(
                "branching at link `{}` (non-serial topology)",
                j.parent
            )));
        }
    }
    let mut order = Vec::with_capacity(joints.len());
    let mut current = *root_link;
    while let Some(&i) = by_parent.get(current) {
        if order.len() > joints.len() {
            return Err(ModelError::Malformed("kinematic loop".into()));
        }
        order.push(i);
        current = joints[i].child;
    }
    if order.len() != joints.len() || links.len() != joints.len() + 1 {
        return Err(ModelError::Malformed("links and joints do not form one serial chain".into()));
    }

    let mut template = KinematicTemplate {
        joints: Vec::with_capacity(order.len()),
        link_lengths: Vec::with_capacity(order.len()),
    };
    let mut link_specs = Vec::with_capacity(order.len());
    let mut joint_specs = Vec::with_capacity(order.len());
    for &i in &order {
        let j = &joints[i];
        let spec = links
            .get_mut(j.child)
            .and_then(|l| l.spec.take())
            .ok_or_else(|| ModelError::Malformed(format!("moving link `{}` lacks <inertial>", j.child)))?;
        template.joints.push(j.template.clone());
        template.link_lengths.push(spec.length);
        link_specs.push(spec);
        joint_specs.push(j.spec);
    }

    let id = root
        .attribute("name")
        .and_then(|n| n.strip_prefix("robot_"))
        .and_then(|n| n.parse().ok())
        .unwrap_or(0);
    let generation_seed = root
        .attribute("generation_seed")
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let model = RobotModel {
        id,
        template,
        links: link_specs,
        joints: joint_specs,
        generation_seed,
    };
    model.validate()?;
    Ok(model)
}
