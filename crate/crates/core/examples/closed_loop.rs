//! Simulates a street scene, labels it and compares the labels with the
//! simulator's ground truth.
//!
//! ```text
//! cargo run --release -p dogma-core --example closed_loop -- [seed]
//! ```

use dogma_core::auto_label::{label_sequence, LabelerConfig};
use dogma_core::simulator::{simulate, NoiseConfig, ObjectSpec, ScenarioConfig, Waypoint};
use dogma_core::{rotated_iou, GridMeta, OrientedBox, Shape};

fn straight(w: f64, l: f64, from: (f64, f64), to: (f64, f64), seconds: f64, tag: &str) -> ObjectSpec {
    ObjectSpec {
        shape: Shape::from_dims(w, l),
        waypoints: vec![
            Waypoint { e: from.0, n: from.1, time: 0.0 },
            Waypoint { e: to.0, n: to.1, time: seconds },
        ],
        class_tag: tag.into(),
    }
}

fn main() -> dogma_core::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut sc = ScenarioConfig::new(GridMeta::new(256, 256, 0.2), 100);
    sc.seed = seed;
    sc.surface_depth = 1.5;
    sc.noise = NoiseConfig {
        velocity_sigma: 0.25,
        occupancy_beta: (9.0, 1.0),
        spurious_border_prob: 0.05,
        appearance_ramp_frames: 15,
    };
    sc.static_walls.push(OrientedBox::new(22.0, 18.0, 0.4, 3.0, 0.0));
    sc.objects = vec![
        straight(1.9, 4.6, (5.0, 10.0), (35.0, 10.0), 9.9, "car"),
        straight(1.8, 4.4, (45.0, 5.0), (45.0, 40.0), 9.9, "car"),
        straight(2.1, 5.5, (40.0, 46.0), (15.0, 46.0), 9.9, "van"),
        straight(1.7, 3.9, (8.0, 38.0), (8.0, 14.0), 9.9, "compact"),
        straight(1.8, 4.5, (12.0, 44.0), (38.0, 30.0), 9.9, "car"),
    ];
    let (frames, gt) = simulate(&sc)?;
    let out = label_sequence(&frames, &LabelerConfig::default())?;
    println!("{} accepted, {} rejected", out.accepted().count(), out.rejections.len());
    for r in &out.rejections {
        println!("  trajectory {} rejected: {}", r.id, r.reason.as_str());
    }
    for (k, obj) in sc.objects.iter().enumerate() {
        let truth = |t: usize| gt.frames[t][k].bbox;
        let visible: Vec<usize> = (0..frames.len()).filter(|&t| gt.frames[t][k].visible_cells > 0).collect();
        let matched = visible
            .iter()
            .filter(|&&t| out.labels[t].boxes().iter().any(|b| rotated_iou(b, &truth(t)) >= 0.5))
            .count();
        println!(
            "object {k} ({}): matched on {matched} of {} visible frames",
            obj.class_tag,
            visible.len()
        );
        for tr in out.accepted() {
            let hits = tr.entries.iter().filter(|e| rotated_iou(&e.bbox, &truth(e.frame)) >= 0.5).count();
            if 2 * hits < tr.entries.len() {
                continue;
            }
            let b = tr.entries[0].bbox;
            println!(
                "  trajectory {}: frames {}..={}, created at {}, shape {:.2} x {:.2} (true {:.2} x {:.2})",
                tr.id,
                tr.entries[0].frame,
                tr.entries.last().map_or(0, |e| e.frame),
                tr.forward_start,
                b.width,
                b.length,
                obj.shape.width(),
                obj.shape.length
            );
        }
    }
    Ok(())
}
