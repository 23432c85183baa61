use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Result;
use crate::embedding::Embedder;
use crate::memory::{LessonTag, MemoryStore, NewRecord, ScenarioKey};

/// Household items the filler tasks are about. None of them appear in the
/// built-in scenarios.
pub const FILLER_OBJECTS: [&str; 24] = [
    "cup", "spoon", "fork", "lemon", "pear", "marker", "stapler", "bottle", "notebook", "carrot", "tomato", "peach",
    "ladle", "whisk", "glove", "remote", "pencil", "eraser", "cucumber", "onion", "kiwi", "soap", "toothbrush", "clip",
];

pub const FILLER_PLACES: [&str; 10] = [
    "basket", "tray", "drawer", "bin", "shelf", "cabinet", "rack", "crate", "caddy", "sink",
];

/// Synthetic simple-task experiences: pick and place successes with no
/// lesson in them.
pub fn filler_entries(n: usize, seed: u64) -> Vec<(ScenarioKey, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut objs = FILLER_OBJECTS.choose_multiple(&mut rng, 2);
            let (o, other) = (objs.next().unwrap(), objs.next().unwrap());
            let place = FILLER_PLACES.choose(&mut rng).unwrap();
            let (instruction, summary) = match rng.gen_range(0..3) {
                0 => (
                    format!("Grab the {o}."),
                    format!("The robot grasped the {o} from the counter in one try and held it up."),
                ),
                1 => (
                    format!("Drop the {o} into the {place}."),
                    format!("The robot grasped the {o}, carried it over and set it in the {place} without trouble."),
                ),
                _ => (
                    format!("Set the {o} onto the {place}."),
                    format!("The robot lifted the {o} and laid it on the {place}; both steps went fine."),
                ),
            };
            let scene = format!("{o} lying beside {other}, {place} close by");
            (ScenarioKey::new(instruction, scene).expect("nonempty instruction"), summary)
        })
        .collect()
}

/// Appends `n` filler records; returns their ids.
pub fn seed_fillers(store: &mut MemoryStore, embedder: &dyn Embedder, n: usize, seed: u64) -> Result<Vec<u64>> {
    let mut ids = Vec::with_capacity(n);
    for (i, (key, summary)) in filler_entries(n, seed).into_iter().enumerate() {
        let v = embedder.embed(&key.key_text())?;
        let rec = NewRecord::new(key, summary, v)
            .episode(format!("filler-{seed:x}-{i}"))
            .lesson(LessonTag::None);
        ids.push(store.append_record(rec)?);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::LocalEmbedder;

    #[test]
    fn fillers_are_seeded_and_lesson_free() {
        assert_eq!(filler_entries(20, 3), filler_entries(20, 3));
        assert_ne!(filler_entries(20, 3), filler_entries(20, 4));
        for (key, summary) in filler_entries(200, 1) {
            assert_eq!(LessonTag::infer_from_text(&summary), LessonTag::None, "{summary}");
            assert_eq!(LessonTag::infer_from_text(&key.key_text()), LessonTag::None);
        }
    }

    #[test]
    fn seeding_appends() {
        let mut store = MemoryStore::new();
        let ids = seed_fillers(&mut store, &LocalEmbedder::default(), 96, 7).unwrap();
        assert_eq!(ids, (0..96).collect::<Vec<u64>>());
        assert_eq!(store.len(), 96);
    }
}
