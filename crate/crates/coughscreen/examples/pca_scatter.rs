//! Project high-dimensional feature vectors to 2-D with PCA and write the
//! scatter SVG/CSV pair that `coughscreen evaluate` emits for reports.

use coughscreen::classify::CovidLabel;
use coughscreen::pca::fit_pca;
use coughscreen::viz::{emit_scatter, ScatterPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two synthetic clusters in 30 dimensions: "covid" shifted along a
    // random direction, "healthy" centered at the origin.
    let dims = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shift: Vec<f64> = (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut labels = Vec::new();
    let mut data = Vec::new();
    for i in 0..120 {
        let covid = i % 2 == 0;
        let point: Vec<f64> = (0..dims)
            .map(|d| {
                let noise: f64 = rng.gen_range(-0.6..0.6);
                if covid { 1.5 * shift[d] + noise } else { noise }
            })
            .collect();
        data.push(point);
        labels.push(if covid { CovidLabel::Covid } else { CovidLabel::Healthy });
    }

    let model = fit_pca(&data, 2)?;
    println!(
        "explained variance: first {:.3}, second {:.3}",
        model.explained_variance[0], model.explained_variance[1]
    );

    let points: Vec<ScatterPoint> = data
        .iter()
        .zip(&labels)
        .enumerate()
        .map(|(i, (x, &label))| {
            let projected = model.project_one(x).expect("dimensions match");
            ScatterPoint {
                x: projected[0],
                y: projected[1],
                label,
                subject_id: format!("subj-{:02}", i / 4),
                day_index: (i % 4) as u32,
            }
        })
        .collect();

    let dir = tempfile::tempdir()?;
    let files = emit_scatter(&points, &dir.path().join("scatter"), None)?;
    println!("wrote {}", files.svg.display());
    println!("wrote {}", files.csv.display());

    let svg = std::fs::read_to_string(&files.svg)?;
    println!(
        "svg is {} bytes with {} circles",
        svg.len(),
        svg.matches("<circle").count()
    );
    Ok(())
}
