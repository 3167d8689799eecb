//! Regenerates the offline repository corpus under `fixtures/` (or the
//! directory given as the first argument).
//!
//! Every model is procedural and deterministic, so rerunning this produces
//! byte-identical files. The corpus is sized for the walkthrough scripts in
//! `scripts/`: planters and pots, hooks, a pendant, a figure, some entries
//! whose licenses forbid remixing, one corrupt upload, and a few
//! environment scans under `env/`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use remixd_core::csg::{csg, CsgOp};
use remixd_core::primitives::{make_primitive, PrimitiveKind};
use remixd_core::stl::{write_stl, StlFormat};
use remixd_core::synth::{box_mesh, circle, loft, prism, torus};
use remixd_core::{TriangleMesh, Vec3};
use serde_json::json;

fn union(a: &TriangleMesh, b: &TriangleMesh) -> TriangleMesh {
    op(CsgOp::Union, a, b)
}

fn op(o: CsgOp, a: &TriangleMesh, b: &TriangleMesh) -> TriangleMesh {
    let r = csg(o, a, b).expect("seed operands are watertight");
    assert!(r.mesh.is_watertight(), "seed {o:?} result must be watertight");
    r.mesh
}

fn bx(min: [f64; 3], max: [f64; 3]) -> TriangleMesh {
    box_mesh(Vec3::from(min), Vec3::from(max))
}

fn ribbed_planter() -> TriangleMesh {
    let star: Vec<[f64; 2]> = (0..48)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / 48.0;
            let r = if i % 2 == 0 { 40.0 } else { 37.5 };
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    op(CsgOp::Difference, &prism(&star, 0.0, 70.0), &prism(&circle(34.0, 64), 4.0, 75.0))
}

fn hex_planter() -> TriangleMesh {
    op(CsgOp::Difference, &prism(&circle(42.0, 6), 0.0, 64.0), &prism(&circle(32.0, 48), 4.0, 70.0))
}

fn tapered_planter() -> TriangleMesh {
    let outer = loft(&circle(30.0, 48), &circle(42.0, 48), 0.0, 70.0);
    let slope = 12.0 / 70.0;
    let inner = loft(&circle(26.5, 48), &circle(26.5 + slope * 71.0, 48), 4.0, 75.0);
    op(CsgOp::Difference, &outer, &inner)
}

fn plain_pot(r: f64, h: f64) -> TriangleMesh {
    op(CsgOp::Difference, &prism(&circle(r, 40), 0.0, h), &prism(&circle(r - 3.0, 40), 3.0, h + 5.0))
}

fn cloth_hook() -> TriangleMesh {
    let plate = bx([-15.0, 0.0, 0.0], [15.0, 5.0, 50.0]);
    let arm = bx([-5.0, 4.0, 0.0], [5.0, 40.0, 8.0]);
    let tip = bx([-5.0, 32.0, 7.0], [5.0, 40.0, 22.0]);
    union(&union(&plate, &arm), &tip)
}

/// Under-desk clamp: the jaw rests on a board top at z = 18.
fn headphone_hook() -> TriangleMesh {
    let jaw = bx([-6.0, -10.0, 18.0], [50.0, 10.0, 24.0]);
    let spine = bx([-6.0, -10.0, -40.0], [0.0, 10.0, 23.0]);
    let arm = bx([-5.0, -10.0, -46.0], [30.0, 10.0, -39.0]);
    let lip = bx([24.0, -10.0, -45.0], [30.0, 10.0, -30.0]);
    union(&union(&union(&jaw, &spine), &arm), &lip)
}

fn cable_hook() -> TriangleMesh {
    union(&bx([0.0, 0.0, 0.0], [20.0, 4.0, 30.0]), &bx([5.0, 3.0, 0.0], [15.0, 20.0, 5.0]))
}

/// Ring in the xz plane, centered at the origin, with a bail rising to
/// z = 30. The bail is what gets fused into a mount.
fn pendant() -> TriangleMesh {
    let mut ring = torus(15.0, 4.0, 48, 16);
    for v in &mut ring.vertices {
        *v = Vec3::new(v.x, -v.z, v.y);
    }
    union(&ring, &bx([-5.0, -3.0, 14.0], [5.0, 3.0, 30.0]))
}

fn figure() -> TriangleMesh {
    let torso = loft(&circle(22.0, 32), &circle(14.0, 32), 0.0, 40.0);
    let neck = prism(&circle(8.0, 24), 35.0, 45.0);
    let head = make_primitive(&PrimitiveKind::Sphere {
        radius: 25.0,
        subdivisions: 3,
    })
    .unwrap()
    .translated(Vec3::new(0.0, 0.0, 62.0));
    union(&union(&torso, &neck), &head)
}

/// Desk top with an existing planter fused into it, as a coarse room scan
/// would deliver it.
fn desk_with_planter() -> TriangleMesh {
    let desk = bx([-300.0, -200.0, -25.0], [300.0, 200.0, 0.0]);
    let outer = loft(&circle(35.0, 40), &circle(45.0, 40), -5.0, 80.0);
    let inner = loft(&circle(31.0, 40), &circle(31.0 + 10.0 / 85.0 * 82.0, 40), 6.0, 85.0);
    let planter = op(CsgOp::Difference, &outer, &inner).translated(Vec3::new(150.0, 0.0, 0.0));
    union(&desk, &planter)
}

/// The plant's nursery pot, filled with soil.
fn nursery_pot() -> TriangleMesh {
    loft(&circle(30.0, 32), &circle(36.0, 32), 0.0, 60.0)
}

/// An 18 mm shelf board whose front edge is the plane x = -5 and whose top
/// is z = 0.
fn shelf() -> TriangleMesh {
    bx([-5.0, -100.0, -18.0], [195.0, 100.0, 0.0])
}

fn wall_hook() -> TriangleMesh {
    let plate = bx([-20.0, 0.0, 0.0], [20.0, 6.0, 60.0]);
    let arm = bx([-6.0, 5.0, 0.0], [6.0, 50.0, 10.0]);
    let tip = bx([-6.0, 42.0, 9.0], [6.0, 50.0, 26.0]);
    union(&union(&plate, &arm), &tip)
}

/// Top-down height map as an 8-bit grayscale PNG.
fn thumbnail(mesh: &TriangleMesh, size: u32) -> Vec<u8> {
    let b = mesh.bounds().unwrap();
    let ext = b.extent();
    let span = ext.x.max(ext.y) * 1.1;
    let (cx, cy) = (b.center().x, b.center().y);
    let to_px = |x: f64, y: f64| {
        (
            ((x - cx) / span + 0.5) * size as f64,
            ((cy - y) / span + 0.5) * size as f64,
        )
    };
    let mut depth = vec![f64::NEG_INFINITY; (size * size) as usize];
    for t in 0..mesh.triangle_count() {
        let c = mesh.corners(t);
        let p: Vec<(f64, f64)> = c.iter().map(|v| to_px(v.x, v.y)).collect();
        let det = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        if det.abs() < 1e-12 {
            continue;
        }
        let (x0, x1) = (p.iter().map(|q| q.0).fold(f64::MAX, f64::min), p.iter().map(|q| q.0).fold(f64::MIN, f64::max));
        let (y0, y1) = (p.iter().map(|q| q.1).fold(f64::MAX, f64::min), p.iter().map(|q| q.1).fold(f64::MIN, f64::max));
        for py in (y0.floor().max(0.0) as u32)..(y1.ceil().min(size as f64) as u32) {
            for px in (x0.floor().max(0.0) as u32)..(x1.ceil().min(size as f64) as u32) {
                let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
                let l1 = ((sx - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (sy - p[0].1)) / det;
                let l2 = ((p[1].0 - p[0].0) * (sy - p[0].1) - (sx - p[0].0) * (p[1].1 - p[0].1)) / det;
                if l1 < 0.0 || l2 < 0.0 || l1 + l2 > 1.0 {
                    continue;
                }
                let z = c[0].z + l1 * (c[1].z - c[0].z) + l2 * (c[2].z - c[0].z);
                let d = &mut depth[(py * size + px) as usize];
                *d = d.max(z);
            }
        }
    }
    let pixels: Vec<u8> = depth
        .iter()
        .map(|&z| {
            if z.is_finite() {
                (60.0 + 195.0 * ((z - b.min.z) / ext.z.max(1e-9))).round() as u8
            } else {
                255
            }
        })
        .collect();
    let img = image::GrayImage::from_raw(size, size, pixels).unwrap();
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn write(root: &Path, rel: &str, bytes: &[u8]) {
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, bytes).unwrap();
}

fn main() {
    let root = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("fixtures"));

    let models: Vec<(&str, &str, &str, &[&str], TriangleMesh)> = vec![
        ("planter-ribbed", "Ribbed planter", "CC-BY-4.0", &["pot", "planter", "plant"], ribbed_planter()),
        ("planter-hex", "Hexagonal planter pot", "CC-BY-SA-4.0", &["planter", "plant"], hex_planter()),
        ("planter-tapered", "Tapered flower pot", "CC0-1.0", &["planter", "plant"], tapered_planter()),
        ("pot-designer-nd", "Designer pot", "CC-BY-ND-4.0", &["planter"], plain_pot(40.0, 60.0)),
        ("pot-store", "Store-bought plant pot replica", "All Rights Reserved", &["planter"], plain_pot(35.0, 55.0)),
        ("hook-cloth", "Cloth hook", "CC-BY-4.0", &["coat", "wall"], cloth_hook()),
        ("hook-headphone", "Headphone hook for desks", "CC-BY-NC-4.0", &["headphones", "clamp"], headphone_hook()),
        ("hook-cable-nd", "Cable hook", "CC-BY-NC-ND-4.0", &["wire"], cable_hook()),
        ("hook-mystery", "Mystery hook", "custom", &[], cable_hook()),
        ("pendant-animal", "Animal head pendant", "CC-BY-SA-4.0", &["jewellery", "necklace"], pendant()),
        ("figure-bust", "Figure bust", "CC0-1.0", &["statue", "character"], figure()),
    ];

    let mut index = Vec::new();
    for (id, title, license, tags, mesh) in &models {
        assert!(mesh.is_watertight() && mesh.signed_volume() > 0.0, "{id}");
        let stl = format!("models/{id}.stl");
        let png = format!("thumbs/{id}.png");
        write(&root, &stl, &write_stl(mesh, StlFormat::Binary).unwrap());
        write(&root, &png, &thumbnail(mesh, 96));
        index.push(json!({
            "id": id,
            "title": title,
            "thumbnail_url": png,
            "license": license,
            "remix_allowed": false,
            "file_locators": [stl],
            "tags": tags,
        }));
        println!("{id:18} {:6} triangles  {:10.1} mm3", mesh.triangle_count(), mesh.signed_volume());
    }

    // An upload cut off mid-transfer: the header promises 12 facets.
    let whole = write_stl(&bx([0.0; 3], [40.0, 40.0, 40.0]), StlFormat::Binary).unwrap();
    write(&root, "models/pot-broken.stl", &whole[..84 + 50 * 5 + 20]);
    write(&root, "thumbs/pot-broken.png", &thumbnail(&bx([0.0; 3], [40.0, 40.0, 40.0]), 96));
    index.push(json!({
        "id": "pot-broken",
        "title": "Broken pot upload",
        "thumbnail_url": "thumbs/pot-broken.png",
        "license": "CC0-1.0",
        "remix_allowed": true,
        "file_locators": ["models/pot-broken.stl"],
        "tags": ["planter"],
    }));

    let mut text = serde_json::to_string_pretty(&index).unwrap();
    text.push('\n');
    write(&root, "index.json", text.as_bytes());

    for (name, mesh) in [
        ("desk_with_planter", desk_with_planter()),
        ("nursery_pot", nursery_pot()),
        ("shelf", shelf()),
        ("wall_hook", wall_hook()),
    ] {
        assert!(mesh.is_watertight(), "{name}");
        write(&root, &format!("env/{name}.stl"), &write_stl(&mesh, StlFormat::Binary).unwrap());
        println!("env/{name:14} {:6} triangles  {:10.1} mm3", mesh.triangle_count(), mesh.signed_volume());
    }
}
