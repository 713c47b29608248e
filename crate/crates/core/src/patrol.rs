//! Deterministic patrol simulation: a generated parking lot, a sweep plan
//! over its slots, synthetic captures per stop, recognition, legality
//! checks, event logging, and notifications.
//!
//! Everything downstream of the seed is reproducible: the lot layout, which
//! plates are planted where, and every captured frame. Two runs with the
//! same seed produce identical events and identical notification bodies.

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::imaging::{Image, Rect};
use crate::notify::{notification_for, NotifyQueue};
use crate::recognizer::{ImageSource, PlateRecognizer, PlateString};
use crate::registry::{check_legality, EventStore, PatrolEvent, Registry, StoreError, Verdict};
use crate::scalar::Scalar;
use crate::synth::{degrade, render_plate, DegradeSpec, GlyphAtlas, SynthError};

/// Pixels of white border around a rendered plate in a capture.
pub const CAPTURE_MARGIN: u32 = 20;
/// Sensor noise applied to every capture.
pub const CAPTURE_NOISE_SIGMA: Scalar = 4.0;
/// Degrees of plate skew per degree of camera pan. A stop's worst pan of
/// 30 degrees lands well inside the degrader's 10-degree ceiling.
pub const ANGLE_ATTENUATION: Scalar = 0.05;

#[derive(Debug, thiserror::Error)]
pub enum PatrolError {
    #[error("infeasible lot: {0}")]
    Infeasible(String),
    #[error("sweep plan names unknown slot {0}")]
    UnknownWaypoint(String),
    #[error("sweep plan has no angles")]
    EmptyPlan,
    #[error("capture: {0}")]
    Synth(#[from] SynthError),
    #[error("event log: {0}")]
    Store(#[from] StoreError),
}

/// One parking slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    /// Stable label like `B4`, used as the event's place.
    pub id: String,
    /// Grid coordinate (column, row).
    pub position: (u32, u32),
    pub occupant: Option<PlateString>,
}

/// A generated lot: slots plus the seed every capture derives from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lot {
    pub slots: Vec<Slot>,
    pub seed: u64,
}

impl Lot {
    pub fn slot(&self, id: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn occupied_count(&self) -> usize {
        self.slots.iter().filter(|s| s.occupant.is_some()).count()
    }
}

const LOT_COLUMNS: u32 = 6;

fn slot_id(index: usize) -> String {
    let row = index as u32 / LOT_COLUMNS;
    let col = index as u32 % LOT_COLUMNS;
    let letter = (b'A' + (row % 26) as u8) as char;
    format!("{letter}{}", col + 1)
}

const PLATE_CHARS: &[u8] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

fn random_plate<R: Rng>(rng: &mut R) -> PlateString {
    let len = if rng.random_bool(0.5) { 6 } else { 7 };
    let s: String = (0..len)
        .map(|_| PLATE_CHARS[rng.random_range(0..PLATE_CHARS.len())] as char)
        .collect();
    crate::recognizer::normalize_plate(&s).expect("generated from the plate alphabet")
}

/// Generates a lot with exactly `n_occupied` cars, of which exactly
/// `n_illegal` carry plates absent from the registry and the rest carry
/// registered plates (sampled without replacement). Deterministic in
/// `seed`. Errors if the counts cannot be satisfied.
pub fn generate_lot(
    n_slots: usize,
    n_occupied: usize,
    registry: &Registry,
    n_illegal: usize,
    seed: u64,
) -> Result<Lot, PatrolError> {
    if n_occupied > n_slots {
        return Err(PatrolError::Infeasible(format!(
            "{n_occupied} cars will not fit in {n_slots} slots"
        )));
    }
    if n_illegal > n_occupied {
        return Err(PatrolError::Infeasible(format!(
            "{n_illegal} illegal cars among only {n_occupied} occupants"
        )));
    }
    let n_legal = n_occupied - n_illegal;
    if n_legal > registry.len() {
        return Err(PatrolError::Infeasible(format!(
            "{n_legal} legal plates wanted but the registry holds {}",
            registry.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // which slots hold cars
    let mut indices: Vec<usize> = (0..n_slots).collect();
    indices.shuffle(&mut rng);
    let mut occupied: Vec<usize> = indices.into_iter().take(n_occupied).collect();
    occupied.sort_unstable();

    // which of those cars are the violators
    let mut violators = occupied.clone();
    violators.shuffle(&mut rng);
    let violators: std::collections::BTreeSet<usize> =
        violators.into_iter().take(n_illegal).collect();

    // registered plates for the legal cars
    let mut pool: Vec<&PlateString> = registry.iter().map(|e| &e.plate).collect();
    pool.shuffle(&mut rng);
    let mut legal_plates = pool.into_iter().take(n_legal);

    // unregistered plates for the violators
    let mut used: std::collections::BTreeSet<String> = registry
        .iter()
        .map(|e| e.plate.as_str().to_owned())
        .collect();
    let mut illegal_plates = Vec::with_capacity(n_illegal);
    while illegal_plates.len() < n_illegal {
        let candidate = random_plate(&mut rng);
        if used.insert(candidate.as_str().to_owned()) {
            illegal_plates.push(candidate);
        }
    }
    let mut illegal_plates = illegal_plates.into_iter();

    let mut slots = Vec::with_capacity(n_slots);
    for i in 0..n_slots {
        let occupant = if !occupied.contains(&i) {
            None
        } else if violators.contains(&i) {
            Some(illegal_plates.next().expect("one per violator"))
        } else {
            Some(legal_plates.next().expect("one per legal car").clone())
        };
        slots.push(Slot {
            id: slot_id(i),
            position: (i as u32 % LOT_COLUMNS, i as u32 / LOT_COLUMNS),
            occupant,
        });
    }
    Ok(Lot { slots, seed })
}

/// The route: which slots to visit, and the camera pan angles to try at
/// each stop, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub waypoints: Vec<String>,
    pub angles: Vec<Scalar>,
}

impl SweepPlan {
    /// Visits every slot in lot order.
    pub fn full_lot(lot: &Lot, angles: Vec<Scalar>) -> Self {
        Self {
            waypoints: lot.slots.iter().map(|s| s.id.clone()).collect(),
            angles,
        }
    }

    /// Head-on first, then pan left and right.
    pub fn default_angles() -> Vec<Scalar> {
        vec![0.0, -15.0, 15.0, -30.0, 30.0]
    }
}

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Noise/rotation seed for one (lot, slot, angle) capture: FNV-1a over the
/// three, so every frame in a sweep gets an independent but reproducible
/// noise stream.
pub fn capture_seed(lot_seed: u64, slot_id: &str, angle: Scalar) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325;
    h = fnv1a(h, &lot_seed.to_le_bytes());
    h = fnv1a(h, slot_id.as_bytes());
    h = fnv1a(h, &angle.to_bits().to_le_bytes());
    h
}

/// Simulates photographing a slot at a pan angle: the occupant's plate is
/// rendered, skewed by the attenuated angle, and noised. Returns the frame
/// and the plate's true box, or `None` for an empty slot.
pub fn capture(
    lot: &Lot,
    slot: &Slot,
    angle: Scalar,
    atlas: &GlyphAtlas,
) -> Result<Option<(Image, Rect)>, PatrolError> {
    let Some(plate) = &slot.occupant else {
        return Ok(None);
    };
    let (img, truth) = render_plate(plate, atlas, CAPTURE_MARGIN)?;
    let rotation = (angle * ANGLE_ATTENUATION).clamp(
        -DegradeSpec::MAX_ROTATION_DEG,
        DegradeSpec::MAX_ROTATION_DEG,
    );
    let spec = DegradeSpec::new(
        CAPTURE_NOISE_SIGMA,
        rotation,
        0,
        capture_seed(lot.seed, &slot.id, angle),
    )?;
    Ok(Some((degrade(&img, &spec), truth.rect())))
}

/// Tally of one sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PatrolReport {
    pub legal: usize,
    pub illegal: usize,
    pub unreadable: usize,
    pub empty: usize,
}

/// Everything a sweep needs besides the lot and the plan.
pub struct PatrolContext<'a> {
    pub registry: &'a Registry,
    pub store: &'a EventStore,
    pub notifier: Option<&'a NotifyQueue>,
    pub atlas: &'a GlyphAtlas,
    /// Simulated clock at the first waypoint.
    pub clock_start: DateTime<Utc>,
    /// Simulated seconds between waypoints.
    pub step_secs: u64,
}

/// Drives one sweep: at each waypoint, try the pan angles in order until a
/// frame reads, judge the plate against the registry, persist the event,
/// and queue a notification. A slot whose every angle fails becomes an
/// unreadable event carrying the last failure. Empty slots advance the
/// clock but produce nothing.
pub fn run_patrol(
    lot: &Lot,
    plan: &SweepPlan,
    recognizer: &dyn PlateRecognizer,
    ctx: &PatrolContext<'_>,
) -> Result<PatrolReport, PatrolError> {
    if plan.angles.is_empty() {
        return Err(PatrolError::EmptyPlan);
    }
    let mut report = PatrolReport::default();
    for (i, waypoint) in plan.waypoints.iter().enumerate() {
        let slot = lot
            .slot(waypoint)
            .ok_or_else(|| PatrolError::UnknownWaypoint(waypoint.clone()))?;
        let captured_at =
            ctx.clock_start + chrono::Duration::seconds(ctx.step_secs as i64 * i as i64);

        if slot.occupant.is_none() {
            report.empty += 1;
            continue;
        }

        let mut read: Option<PlateString> = None;
        let mut backend = recognizer.label();
        let mut last_failure = String::from("no capture attempted");
        for &angle in &plan.angles {
            let (frame, truth) =
                capture(lot, slot, angle, ctx.atlas)?.expect("occupied slot captures");
            let result = recognizer.recognize(&ImageSource::memory_with_truth(&frame, truth));
            backend = result.backend.clone();
            match result.plate {
                Ok(plate) => {
                    read = Some(plate);
                    break;
                }
                Err(failure) => last_failure = failure.to_string(),
            }
        }

        let event = match read {
            Some(plate) => {
                let verdict = check_legality(ctx.registry, &plate, captured_at);
                match verdict {
                    Verdict::Legal => report.legal += 1,
                    Verdict::Illegal => report.illegal += 1,
                    Verdict::Unreadable => unreachable!("check_legality never says unreadable"),
                }
                let notified = should_notify(ctx.notifier, verdict);
                PatrolEvent::read(plate, captured_at, &slot.id, verdict, &backend, notified)
                    .expect("verdict is never unreadable here")
            }
            None => {
                report.unreadable += 1;
                let notified = should_notify(ctx.notifier, Verdict::Unreadable);
                PatrolEvent::unreadable(&last_failure, captured_at, &slot.id, &backend, notified)
            }
        };

        let seq = ctx.store.append(&event)?;
        if event.notified {
            let queue = ctx.notifier.expect("notified implies a notifier");
            queue.enqueue(notification_for(&event, seq, &queue.config().recipient));
        }
    }
    Ok(report)
}

fn should_notify(notifier: Option<&NotifyQueue>, verdict: Verdict) -> bool {
    match notifier {
        None => false,
        Some(q) => verdict != Verdict::Legal || q.config().notify_legal,
    }
}
