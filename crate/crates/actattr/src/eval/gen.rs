//! Deterministic suite generators. Each family constructs scenes whose
//! ground truth is known by construction and a query whose template the
//! planner recognizes. All randomness flows from one ChaCha8 stream seeded
//! with the suite seed, so (family, n, seed) pins every byte of the output.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::kb::KnowledgeBase;
use crate::lang::{ordinal_word, Query, QueryFamily};
use crate::scene::{CameraModel, CameraMount, Pose, RobotInit, SceneFile, SceneObject};

use super::{Episode, EvalError, Suite};

/// Consecutive mass ratio required between weight-scene objects. An order
/// of magnitude keeps the task unambiguous under any sensor noise worth
/// simulating.
const MASS_RATIO: f64 = 10.0;

/// Minimum gap between camera-axis distances to the object faces in a
/// distance scene, meters.
const DISTANCE_GAP: f64 = 0.3;

/// Objects a servo approach will probe must stand at least this tall, so
/// the rangefinder ray at camera height strikes their face.
const MIN_PROBE_HALF_HEIGHT: f64 = 0.06;

pub fn gen_suite(
    family: QueryFamily,
    n: usize,
    kb: &KnowledgeBase,
    seed: u64,
) -> Result<Suite, EvalError> {
    match family {
        QueryFamily::WeightExtreme => gen_weight_suite(n, kb, seed),
        QueryFamily::LocationOrdinal => Ok(gen_location_suite(n, seed)),
        QueryFamily::SizeSuperlative => Ok(gen_size_suite(n, seed)),
        QueryFamily::DistanceExtreme => Ok(gen_distance_suite(n, seed)),
    }
}

fn sorted_names(kb: &KnowledgeBase) -> Vec<String> {
    let mut names: Vec<String> = kb.names().map(str::to_string).collect();
    names.sort();
    names
}

fn robot_origin() -> RobotInit {
    RobotInit {
        pose: Pose::new(0.0, 0.0, std::f64::consts::FRAC_PI_2),
    }
}

fn scene_file(rng: &mut ChaCha8Rng, camera: CameraModel, objects: Vec<SceneObject>) -> SceneFile {
    SceneFile {
        seed: rng.gen(),
        time_step: 0.1,
        camera,
        objects,
        robot: robot_origin(),
    }
}

// ----------------------------------------------------------------- weight

/// Three graspable objects side by side on a thin mat, each at least
/// [`MASS_RATIO`] heavier than the previous one; query asks for the
/// heaviest or the lightest. Errors with [`EvalError::KbTooSmall`] when the
/// knowledge base cannot supply a single such triple.
pub fn gen_weight_suite(n: usize, kb: &KnowledgeBase, seed: u64) -> Result<Suite, EvalError> {
    let names = sorted_names(kb);
    let mut ranked: Vec<(String, f64)> = names
        .iter()
        .map(|name| (name.clone(), kb.mass_of(name).0))
        .collect();
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite masses"));

    let mut triples: Vec<[usize; 3]> = Vec::new();
    for i in 0..ranked.len() {
        for j in (i + 1)..ranked.len() {
            if ranked[j].1 < ranked[i].1 * MASS_RATIO {
                continue;
            }
            for k in (j + 1)..ranked.len() {
                if ranked[k].1 >= ranked[j].1 * MASS_RATIO {
                    triples.push([i, j, k]);
                }
            }
        }
    }
    if triples.is_empty() {
        return Err(EvalError::KbTooSmall(format!(
            "need three known masses with consecutive ratios of at least {MASS_RATIO}, \
             covering two orders of magnitude; the table has {} entries",
            kb.len(),
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let triple = triples[rng.gen_range(0..triples.len())];
        // Presentation order on the table (and in the query) is independent
        // of the mass order.
        let mut order = [0usize, 1, 2];
        order.shuffle(&mut rng);
        let slots = [-0.7, 0.0, 0.7];

        let mat = SceneObject {
            id: "mat".into(),
            name: "mat".into(),
            center: [0.0, 2.0, 0.005],
            extent: [1.15, 0.6, 0.005],
            mass: 3.0,
            graspable: false,
        };
        let mut objects = vec![mat];
        let mut picked: Vec<(String, String, f64)> = Vec::new(); // (id, name, mass)
        for (slot, &which) in order.iter().enumerate() {
            let (name, mass) = ranked[triple[which]].clone();
            let id = format!("o{slot}");
            let hx = rng.gen_range(0.05..0.08);
            let hy = rng.gen_range(0.05..0.08);
            let hz = rng.gen_range(MIN_PROBE_HALF_HEIGHT..0.09);
            let x = slots[slot] + rng.gen_range(-0.05..0.05);
            let y = 2.0 + rng.gen_range(-0.1..0.1);
            // Resting on the mat: bottom face flush with the mat top.
            objects.push(SceneObject {
                id: id.clone(),
                name: name.clone(),
                center: [x, y, 0.01 + hz],
                extent: [hx, hy, hz],
                mass,
                graspable: true,
            });
            picked.push((id, name, mass));
        }

        let want_max = rng.gen_bool(0.5);
        let listed: Vec<&str> = picked.iter().map(|(_, name, _)| name.as_str()).collect();
        let tail = if want_max {
            "the heaviest?"
        } else {
            "the most lightweight?"
        };
        let text = format!("Out of the {}, which one is {tail}", listed.join(", "));
        let gt = picked
            .iter()
            .max_by(|a, b| {
                let (ma, mb) = if want_max { (a.2, b.2) } else { (b.2, a.2) };
                ma.partial_cmp(&mb).expect("finite masses")
            })
            .expect("three objects")
            .0
            .clone();

        episodes.push(Episode {
            scene: scene_file(&mut rng, CameraModel::standard(), objects),
            query: Query {
                text,
                family: QueryFamily::WeightExtreme,
                ground_truth: gt,
            },
        });
    }
    Ok(Suite {
        name: format!("weight-{n}-{seed}"),
        family: QueryFamily::WeightExtreme,
        seed,
        episodes,
    })
}

// --------------------------------------------------------------- location

/// Grid of identically named objects; query picks one by column ordinal,
/// direction, and (for multi-row grids) row ordinal. Rows are depth bands:
/// an elevated camera maps farther rows higher in the image, so image rows
/// count top to bottom = far to near. Degenerate 1xk grids drop the row
/// clause from the query.
pub fn gen_location_suite(n: usize, seed: u64) -> Suite {
    let names = sorted_names(&KnowledgeBase::bundled());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = CameraModel {
        focal: 160.0,
        width: 320.0,
        height: 240.0,
        // Elevated mount: depth differences become image-row differences.
        pose: CameraMount {
            forward: 0.0,
            lateral: 0.0,
            height: 1.0,
            yaw: 0.0,
        },
    };

    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let rows: usize = if rng.gen_bool(0.2) {
            1
        } else {
            rng.gen_range(2..=5)
        };
        let cols: usize = rng.gen_range(2..=5);
        let name = names[rng.gen_range(0..names.len())].clone();

        let mut objects = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            // r = 0 is the nearest depth band.
            let depth = 1.8 + 0.5 * r as f64;
            for c in 0..cols {
                let x = (c as f64 - (cols - 1) as f64 / 2.0) * 0.45;
                objects.push(SceneObject {
                    id: format!("r{r}c{c}"),
                    name: name.clone(),
                    center: [
                        x + rng.gen_range(-0.04..0.04),
                        depth + rng.gen_range(-0.04..0.04),
                        0.05,
                    ],
                    extent: [0.05, 0.05, 0.05],
                    mass: 0.2,
                    graspable: false,
                });
            }
        }

        let pos = signed_ordinal(&mut rng, cols);
        let from_left = rng.gen_bool(0.5);
        let dir_word = if from_left { "left" } else { "right" };
        let col_word = ordinal_word(pos).expect("generator stays in vocabulary");

        // Resolve the grid cell the query denotes. Columns left to right
        // are x ascending; rows top to bottom are depth descending.
        let col = {
            let directed: Vec<usize> = if from_left {
                (0..cols).collect()
            } else {
                (0..cols).rev().collect()
            };
            directed[signed_offset(pos, cols)]
        };
        let (text, row) = if rows == 1 {
            (
                format!("Give me the {col_word} {name} from the {dir_word}."),
                0,
            )
        } else {
            let row_pos = signed_ordinal(&mut rng, rows);
            let row_word = ordinal_word(row_pos).expect("generator stays in vocabulary");
            let top_to_bottom: Vec<usize> = (0..rows).rev().collect();
            (
                format!(
                    "Give me the {col_word} {name} from the {dir_word} at the {row_word} row."
                ),
                top_to_bottom[signed_offset(row_pos, rows)],
            )
        };
        let gt = format!("r{row}c{col}");

        episodes.push(Episode {
            scene: scene_file(&mut rng, camera.clone(), objects),
            query: Query {
                text,
                family: QueryFamily::LocationOrdinal,
                ground_truth: gt,
            },
        });
    }
    Suite {
        name: format!("location-{n}-{seed}"),
        family: QueryFamily::LocationOrdinal,
        seed,
        episodes,
    }
}

/// A 1-based signed ordinal valid for a sequence of `len`, restricted to
/// the vocabulary: positive up to fifth, negative down to third-to-last.
fn signed_ordinal(rng: &mut ChaCha8Rng, len: usize) -> i64 {
    let len = len as i64;
    if len > 1 && rng.gen_bool(0.35) {
        -rng.gen_range(1..=len.min(3))
    } else {
        rng.gen_range(1..=len.min(5))
    }
}

/// 0-based offset of a 1-based signed position into a sequence of `len`.
fn signed_offset(pos: i64, len: usize) -> usize {
    if pos > 0 {
        (pos - 1) as usize
    } else {
        (len as i64 + pos) as usize
    }
}

// ------------------------------------------------------------------- size

/// Several objects of one name at the same depth with clearly distinct
/// physical sizes; query asks for the largest or smallest instance.
pub fn gen_size_suite(n: usize, seed: u64) -> Suite {
    let names = sorted_names(&KnowledgeBase::bundled());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let k: usize = rng.gen_range(3..=5);
        let name = names[rng.gen_range(0..names.len())].clone();
        // Distinct size steps of at least 35 percent keep the screen-area
        // ranking unambiguous between neighbors.
        let mut multipliers = [1.0, 1.35, 1.8, 2.4, 3.2];
        multipliers.shuffle(&mut rng);

        let mut objects = Vec::with_capacity(k);
        let mut sized: Vec<(String, f64)> = Vec::new();
        for i in 0..k {
            let m = multipliers[i];
            let half = 0.035 * m;
            let x = (i as f64 - (k - 1) as f64 / 2.0) * 0.5 + rng.gen_range(-0.03..0.03);
            let id = format!("o{i}");
            objects.push(SceneObject {
                id: id.clone(),
                name: name.clone(),
                center: [x, 2.0 + rng.gen_range(-0.03..0.03), half],
                extent: [half, 0.05, half],
                mass: 1.0,
                graspable: false,
            });
            sized.push((id, m));
        }

        let want_max = rng.gen_bool(0.5);
        let adjective = if want_max { "largest" } else { "smallest" };
        let text = format!("Which is the {adjective} {name} in the image?");
        let gt = sized
            .iter()
            .max_by(|a, b| {
                let (ma, mb) = if want_max { (a.1, b.1) } else { (b.1, a.1) };
                ma.partial_cmp(&mb).expect("finite multipliers")
            })
            .expect("at least three objects")
            .0
            .clone();

        episodes.push(Episode {
            scene: scene_file(&mut rng, CameraModel::standard(), objects),
            query: Query {
                text,
                family: QueryFamily::SizeSuperlative,
                ground_truth: gt,
            },
        });
    }
    Suite {
        name: format!("size-{n}-{seed}"),
        family: QueryFamily::SizeSuperlative,
        seed,
    episodes,
    }
}

// --------------------------------------------------------------- distance

/// Two to four distinctly named objects at clearly separated camera
/// distances; query asks which is closer. Ground truth is the object whose
/// near face lies closest along the camera axis, the same face the
/// rangefinder reads.
pub fn gen_distance_suite(n: usize, seed: u64) -> Suite {
    let names = sorted_names(&KnowledgeBase::bundled());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut episodes = Vec::with_capacity(n);
    for _ in 0..n {
        let k: usize = rng.gen_range(2..=4);
        let mut pool: Vec<usize> = (0..names.len()).collect();
        pool.shuffle(&mut rng);
        let chosen: Vec<String> = pool[..k].iter().map(|&i| names[i].clone()).collect();

        // Near-face distances with guaranteed pairwise gaps, assigned to
        // objects in random order.
        let mut faces = Vec::with_capacity(k);
        let mut face = rng.gen_range(1.2..1.5);
        for _ in 0..k {
            faces.push(face);
            face += rng.gen_range(DISTANCE_GAP + 0.05..0.8);
        }
        faces.shuffle(&mut rng);

        let xs = laterals(&mut rng, k);
        let mut objects = Vec::with_capacity(k);
        let mut measured: Vec<(String, f64)> = Vec::new();
        for i in 0..k {
            let hx = rng.gen_range(0.05..0.08);
            let hy = rng.gen_range(0.05..0.08);
            let hz = rng.gen_range(MIN_PROBE_HALF_HEIGHT..0.09);
            let id = format!("o{i}");
            objects.push(SceneObject {
                id: id.clone(),
                name: chosen[i].clone(),
                center: [xs[i], faces[i] + hy, hz],
                extent: [hx, hy, hz],
                mass: 1.0,
                graspable: false,
            });
            measured.push((id, faces[i]));
        }

        let text = format!(
            "Out of the {}, which one is closer to me?",
            chosen.join(", ")
        );
        let gt = measured
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"))
            .expect("at least two objects")
            .0
            .clone();

        episodes.push(Episode {
            scene: scene_file(&mut rng, CameraModel::standard(), objects),
            query: Query {
                text,
                family: QueryFamily::DistanceExtreme,
                ground_truth: gt,
            },
        });
    }
    Suite {
        name: format!("distance-{n}-{seed}"),
        family: QueryFamily::DistanceExtreme,
        seed,
        episodes,
    }
}

/// Lateral offsets that keep every object well inside the field of view
/// and far enough apart that the rangefinder ray aimed at one can never
/// clip a neighbor.
fn laterals(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    'attempt: for _ in 0..200 {
        let xs: Vec<f64> = (0..k)
            .map(|_| {
                let magnitude = rng.gen_range(0.35..0.85);
                if rng.gen_bool(0.5) {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        for i in 0..k {
            for j in (i + 1)..k {
                if (xs[i] - xs[j]).abs() < 0.25 {
                    continue 'attempt;
                }
            }
        }
        return xs;
    }
    // Statistically unreachable; a fixed spread keeps generation total.
    let mut xs = vec![-0.8, -0.45, 0.5, 0.85][..k].to_vec();
    xs.shuffle(rng);
    xs
}
