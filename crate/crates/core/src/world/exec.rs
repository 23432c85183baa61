use serde::{Deserialize, Serialize};

use super::{Result, WorldError, WorldState};
use crate::action::{Action, Skill};
use crate::geometry::{candidate_placements, candidate_push_endpoints, CandidateSet, Point2, PushDirection, RasterMask};

/// How far an occluding object gets shoved by a failed grasp attempt.
const NUDGE: f64 = 0.25;
const SEARCH_RINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    Ok,
    GraspBlocked,
    TooSmallContact,
    Cracked,
    ContentsDropped,
    NotHolding,
    UnknownObject,
}

impl EffectKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EffectKind::Ok => "ok",
            EffectKind::GraspBlocked => "grasp_blocked",
            EffectKind::TooSmallContact => "too_small_contact",
            EffectKind::Cracked => "cracked",
            EffectKind::ContentsDropped => "contents_dropped",
            EffectKind::NotHolding => "not_holding",
            EffectKind::UnknownObject => "unknown_object",
        }
    }
}

/// Outcome of one skill execution.
///
/// `involved` names the other objects behind a failure: the occluder of a
/// blocked grasp, or the items that fell out of a lifted container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub kind: EffectKind,
    pub detail: String,
    #[serde(default)]
    pub involved: Vec<String>,
}

impl Effect {
    fn new(kind: EffectKind, detail: impl Into<String>) -> Self {
        Self {
            kind,
            detail: detail.into(),
            involved: Vec::new(),
        }
    }

    fn involving(mut self, names: Vec<String>) -> Self {
        self.involved = names;
        self
    }

    pub fn is_ok(&self) -> bool {
        self.kind == EffectKind::Ok
    }
}

/// Disc of cells covered by an object; never empty.
pub(crate) fn disc_mask(center: Point2, radius: f64) -> RasterMask {
    let x0 = (center.x - radius).floor() as i64;
    let y0 = (center.y - radius).floor() as i64;
    let w = ((center.x + radius).ceil() as i64 - x0).max(1) as usize;
    let h = ((center.y + radius).ceil() as i64 - y0).max(1) as usize;
    let mut mask = RasterMask::from_fn(w, h, |c, r| {
        let p = Point2::new(x0 as f64 + c as f64 + 0.5, y0 as f64 + r as f64 + 0.5);
        p.distance(&center) <= radius
    })
    .with_origin((x0, y0));
    if mask.is_empty() {
        mask = RasterMask::marker(center);
    }
    mask
}

fn lookup(world: &WorldState, name: &str) -> Result<usize> {
    world
        .find(name)
        .ok_or_else(|| WorldError::InvalidInput(format!("no object named {name:?}")))
}

/// Numbered grasp sections spread over the object's mask.
pub fn grasp_candidates(world: &WorldState, target: &str) -> Result<CandidateSet> {
    let o = world.object(lookup(world, target)?);
    candidate_placements(&disc_mask(o.position, o.extent), world.params.placement_candidates)
        .map_err(|e| WorldError::InvalidInput(e.to_string()))
}

/// Numbered spots on `location` (an object, or free table space for
/// "table") where the held object could go.
pub fn placement_candidates(world: &WorldState, location: &str) -> Result<CandidateSet> {
    let mask = match world.find(location).filter(|&l| world.on_table(l)) {
        Some(l) => {
            let o = world.object(l);
            disc_mask(o.position, o.extent)
        }
        None if location.trim().eq_ignore_ascii_case("table") => free_table_mask(world),
        None => {
            return Err(WorldError::InvalidInput(format!(
                "no placement location named {location:?}"
            )))
        }
    };
    candidate_placements(&mask, world.params.placement_candidates)
        .map_err(|e| WorldError::InvalidInput(e.to_string()))
}

fn free_table_mask(world: &WorldState) -> RasterMask {
    let p = &world.params;
    let margin = p.occlusion_gap + 1.0;
    let free = RasterMask::from_fn(p.raster_width, p.raster_height, |c, r| {
        let cell = Point2::new(c as f64 + 0.5, r as f64 + 0.5);
        world
            .objects
            .iter()
            .filter(|o| world.on_table(o.id))
            .all(|o| cell.distance(&o.position) - o.extent >= margin)
    });
    if free.is_empty() {
        RasterMask::from_fn(p.raster_width, p.raster_height, |_, _| true)
    } else {
        free
    }
}

/// Gripper end points for pushing `target` in `direction`.
pub fn push_candidates(world: &WorldState, target: &str, direction: PushDirection) -> Result<CandidateSet> {
    let o = world.object(lookup(world, target)?);
    candidate_push_endpoints(o.position, direction, world.params.push_step, world.params.push_candidates)
        .map_err(|e| WorldError::InvalidInput(e.to_string()))
}

/// Applies one action. Failures of the skill itself come back as an
/// [`Effect`]; only malformed requests (bad labels, invalid actions) error.
pub fn execute(world: &WorldState, action: &Action, label: Option<u32>) -> Result<(WorldState, Effect)> {
    action.validate().map_err(WorldError::InvalidInput)?;
    let mut w = world.clone();
    let Some(t) = w.find(&action.target_object) else {
        let name = action.target_object.clone();
        return Ok((w, Effect::new(EffectKind::UnknownObject, format!("no object named {name}")).involving(vec![name])));
    };
    let effect = match action.skill {
        Skill::Pick => pick(&mut w, t),
        Skill::Place => place(&mut w, t, action, label)?,
        Skill::Push => push(&mut w, t, action, label)?,
    };
    debug_assert!(w.validate().is_ok());
    Ok((w, effect))
}

fn name(w: &WorldState, id: usize) -> String {
    w.objects[id].name.clone()
}

/// Moves `id` and everything resting in or on it by `delta`, clamped.
fn translate(w: &mut WorldState, id: usize, dx: f64, dy: f64) {
    let mut stack = vec![id];
    while let Some(i) = stack.pop() {
        let p = w.objects[i].position;
        w.objects[i].position = w.bounds.clamp(Point2::new(p.x + dx, p.y + dy));
        stack.extend(w.riders(i));
    }
}

fn detach(w: &mut WorldState, id: usize) {
    for o in &mut w.objects {
        o.contents.retain(|&c| c != id);
        if o.supports == Some(id) {
            o.supports = None;
        }
    }
}

fn pick(w: &mut WorldState, t: usize) -> Effect {
    let tn = name(w, t);
    match w.whereabouts(t) {
        super::Whereabouts::Held => {
            return Effect::new(EffectKind::GraspBlocked, format!("already holding {tn}"));
        }
        super::Whereabouts::Dropped => {
            return Effect::new(EffectKind::UnknownObject, format!("{tn} is not on the table"))
                .involving(vec![tn]);
        }
        super::Whereabouts::OnTable => {}
    }
    if let Some(h) = w.held {
        let hn = name(w, h);
        return Effect::new(EffectKind::GraspBlocked, format!("gripper already holding {hn}")).involving(vec![hn]);
    }
    if let Some(&(o, gap)) = w.neighbors(t).first() {
        if gap < w.params.occlusion_gap {
            let (from, to) = (w.objects[t].position, w.objects[o].position);
            let d = from.distance(&to);
            let (ux, uy) = if d > 0.0 { ((to.x - from.x) / d, (to.y - from.y) / d) } else { (1.0, 0.0) };
            translate(w, o, ux * NUDGE, uy * NUDGE);
            let on = name(w, o);
            return Effect::new(EffectKind::GraspBlocked, format!("{tn} occluded by {on}")).involving(vec![on]);
        }
    }
    if w.objects[t].tiny {
        return Effect::new(EffectKind::GraspBlocked, format!("{tn} is too small to grasp"));
    }
    if w.objects[t].fragile {
        w.objects[t].cracked = true;
        return Effect::new(EffectKind::Cracked, format!("{tn} cracked while grasping"));
    }
    detach(w, t);
    let mut fallen = Vec::new();
    let mut stack = w.riders(t);
    while let Some(r) = stack.pop() {
        stack.extend(w.riders(r));
        fallen.push(r);
    }
    w.objects[t].contents.clear();
    w.objects[t].supports = None;
    w.held = Some(t);
    if fallen.is_empty() {
        return Effect::new(EffectKind::Ok, format!("holding {tn}"));
    }
    fallen.sort_unstable();
    for &f in &fallen {
        w.objects[f].contents.clear();
        w.objects[f].supports = None;
        w.dropped.push(f);
    }
    let names: Vec<String> = fallen.iter().map(|&f| name(w, f)).collect();
    Effect::new(EffectKind::ContentsDropped, format!("{} dropped from {tn}", names.join(" and ")))
        .involving(names)
}

/// First free spot on rings around `anchor`.
fn free_spot_near(w: &WorldState, t: usize, anchor: Point2) -> Point2 {
    const DIRS: [(f64, f64); 8] = [
        (1.0, 0.0),
        (-1.0, 0.0),
        (0.0, 1.0),
        (0.0, -1.0),
        (1.0, 1.0),
        (-1.0, 1.0),
        (1.0, -1.0),
        (-1.0, -1.0),
    ];
    let ext = w.objects[t].extent;
    for ring in 1..=SEARCH_RINGS {
        for (dx, dy) in DIRS {
            let len = (dx * dx + dy * dy as f64).sqrt();
            let p = Point2::new(anchor.x + dx / len * ring as f64, anchor.y + dy / len * ring as f64);
            if p.x < ext || p.y < ext || p.x > w.bounds.max.x - ext || p.y > w.bounds.max.y - ext {
                continue;
            }
            let free = w
                .objects
                .iter()
                .filter(|o| o.id != t && w.on_table(o.id))
                .all(|o| p.distance(&o.position) - o.extent - ext >= w.params.occlusion_gap);
            if free {
                return p;
            }
        }
    }
    w.bounds.clamp(anchor)
}

fn place(w: &mut WorldState, t: usize, action: &Action, label: Option<u32>) -> Result<Effect> {
    let tn = name(w, t);
    if w.held != Some(t) {
        return Ok(Effect::new(EffectKind::NotHolding, format!("not holding {tn}")));
    }
    let location = action.placement_location.as_deref().unwrap_or("table");
    let loc_obj = w.find(location).filter(|&l| l != t && w.on_table(l));
    if loc_obj.is_none() && !location.trim().eq_ignore_ascii_case("table") {
        return Ok(Effect::new(EffectKind::UnknownObject, format!("no place named {location}"))
            .involving(vec![location.to_string()]));
    }
    let spot = match label {
        Some(l) => {
            let set = placement_candidates(w, location)?;
            let c = set
                .get(l)
                .ok_or_else(|| WorldError::InvalidInput(format!("placement label {l} not offered")))?;
            w.bounds.clamp(c.location)
        }
        None => {
            let anchor = loc_obj.map_or(w.objects[t].position, |l| w.objects[l].position);
            free_spot_near(w, t, anchor)
        }
    };
    w.held = None;
    w.objects[t].position = spot;
    let container = (0..w.objects.len()).find(|&c| {
        c != t
            && w.objects[c].is_container
            && w.on_table(c)
            && !w.is_nested(c)
            && spot.distance(&w.objects[c].position) <= w.objects[c].extent
    });
    if let Some(c) = container {
        w.objects[c].contents.push(t);
        return Ok(Effect::new(EffectKind::Ok, format!("placed {tn} in {}", name(w, c))));
    }
    Ok(Effect::new(EffectKind::Ok, format!("placed {tn} on the {location}")))
}

fn push(w: &mut WorldState, t: usize, action: &Action, label: Option<u32>) -> Result<Effect> {
    let tn = name(w, t);
    if !w.on_table(t) {
        return Ok(Effect::new(EffectKind::UnknownObject, format!("{tn} is not on the table")).involving(vec![tn]));
    }
    if w.objects[t].tiny && w.held_tool().is_none() {
        return Ok(Effect::new(EffectKind::TooSmallContact, format!("{tn} is too small for the bare gripper")));
    }
    let direction = action.push_direction.unwrap_or(PushDirection::Right);
    let l = label.unwrap_or(1);
    let set = push_candidates(w, &tn, direction)?;
    let end = set
        .get(l)
        .ok_or_else(|| WorldError::InvalidInput(format!("push label {l} not offered")))?
        .location;
    let start = w.objects[t].position;
    let end = w.bounds.clamp(end);
    translate(w, t, end.x - start.x, end.y - start.y);
    w.objects[t].position = end;
    if let Some(c) = w.container_of(t) {
        if end.distance(&w.objects[c].position) > w.objects[c].extent {
            detach(w, t);
        }
    }
    if let Some(s) = w.supporter_of(t) {
        w.objects[s].supports = None;
    }
    Ok(Effect::new(EffectKind::Ok, format!("pushed {tn} {}", direction.as_str())))
}

/// Whether `after` shows the skill's intended result, judged from the
/// states alone. Agrees with `Effect::kind == Ok` by construction of the
/// rules above; kept separate so tests can cross-check the two.
pub fn nominal_postcondition(before: &WorldState, action: &Action, label: Option<u32>, after: &WorldState) -> bool {
    let Some(t) = before.find(&action.target_object) else {
        return false;
    };
    match action.skill {
        Skill::Pick => before.held.is_none() && after.held == Some(t) && after.dropped == before.dropped && !after.objects[t].cracked,
        Skill::Place => {
            let loc = action.placement_location.as_deref().unwrap_or("table");
            let known = loc.eq_ignore_ascii_case("table") || before.find(loc).is_some_and(|l| l != t && before.on_table(l));
            before.held == Some(t) && known && after.held.is_none() && after.on_table(t)
        }
        Skill::Push => {
            let Some(dir) = action.push_direction else {
                return false;
            };
            if !before.on_table(t) || (before.objects[t].tiny && before.held_tool().is_none()) {
                return false;
            }
            let step = before.params.push_step * label.unwrap_or(1) as f64;
            let p = before.objects[t].position;
            let expected = before.bounds.clamp(Point2::new(p.x + dir.sign() * step, p.y));
            after.objects[t].position == expected
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{SimObject, SimParams};
    use super::*;

    fn obj(id: usize, name: &str, x: f64, extent: f64) -> SimObject {
        SimObject {
            id,
            name: name.into(),
            position: Point2::new(x, 24.0),
            extent,
            fragile: false,
            tiny: false,
            is_container: false,
            contents: vec![],
            supports: None,
            flat_tool_face: false,
            handle_cell: None,
            cracked: false,
        }
    }

    fn world(objects: Vec<SimObject>) -> WorldState {
        WorldState::new(objects, SimParams::default()).unwrap()
    }

    fn run(w: &WorldState, a: &Action, label: Option<u32>) -> (WorldState, Effect) {
        let (after, e) = execute(w, a, label).unwrap();
        assert_eq!(e.is_ok(), nominal_postcondition(w, a, label, &after), "{a} -> {e:?}");
        (after, e)
    }

    #[test]
    fn occluded_pick_is_blocked_and_nudges() {
        let w = world(vec![obj(0, "apple", 30.0, 1.0), obj(1, "container", 32.6, 1.2)]);
        let (after, e) = run(&w, &Action::pick("apple"), None);
        assert_eq!(e.kind, EffectKind::GraspBlocked);
        assert_eq!(e.involved, ["container"]);
        assert!(after.held.is_none());
        assert!((after.objects[1].position.x - 32.85).abs() < 1e-12);
    }

    #[test]
    fn clear_pick_and_place() {
        let w = world(vec![obj(0, "apple", 30.0, 1.0), obj(1, "plate", 14.0, 2.5)]);
        let (w1, e) = run(&w, &Action::pick("apple"), None);
        assert!(e.is_ok());
        assert_eq!(w1.held, Some(0));
        let place = Action::place("apple", "plate").with_precise_spot(true);
        let (w2, e) = run(&w1, &place, Some(1));
        assert!(e.is_ok());
        assert!(w2.objects[0].position.distance(&w2.objects[1].position) <= 2.5);
        let (_, e) = run(&w2, &place, Some(1));
        assert_eq!(e.kind, EffectKind::NotHolding);
    }

    #[test]
    fn tiny_objects_need_a_tool() {
        let mut candy = obj(0, "candy", 20.0, 0.4);
        candy.tiny = true;
        let mut sponge = obj(1, "sponge", 20.0, 1.5);
        sponge.position = Point2::new(20.0, 30.0);
        sponge.flat_tool_face = true;
        let w = world(vec![candy, sponge]);
        let push = Action::push("candy", PushDirection::Right);
        let (same, e) = run(&w, &push, None);
        assert_eq!(e.kind, EffectKind::TooSmallContact);
        assert_eq!(same, w);
        let (_, e) = run(&w, &Action::pick("candy"), None);
        assert_eq!(e.kind, EffectKind::GraspBlocked);
        let (w1, _) = run(&w, &Action::pick("sponge"), None);
        let (w2, e) = run(&w1, &push, Some(3));
        assert!(e.is_ok());
        assert_eq!(w2.objects[0].position, Point2::new(26.0, 24.0));
    }

    #[test]
    fn fragile_cracks_but_pushes_fine() {
        let mut egg = obj(0, "egg", 20.0, 1.0);
        egg.fragile = true;
        let w = world(vec![egg]);
        let (w1, e) = run(&w, &Action::pick("egg"), None);
        assert_eq!(e.kind, EffectKind::Cracked);
        assert!(w1.objects[0].cracked && w1.held.is_none());
        let (_, e) = run(&w, &Action::push("egg", PushDirection::Left), Some(2));
        assert!(e.is_ok());
    }

    #[test]
    fn lifting_a_loaded_container_drops_contents() {
        let mut bowl = obj(0, "bowl", 30.0, 2.0);
        bowl.is_container = true;
        bowl.contents = vec![1];
        let w = world(vec![bowl, obj(1, "apple", 30.0, 0.8)]);
        let (w1, e) = run(&w, &Action::pick("bowl"), None);
        assert_eq!(e.kind, EffectKind::ContentsDropped);
        assert_eq!(e.detail, "apple dropped from bowl");
        assert_eq!(w1.held, Some(0));
        assert_eq!(w1.dropped, vec![1]);

        // unload first
        let (w1, e) = run(&w, &Action::pick("apple"), None);
        assert!(e.is_ok());
        let (w2, e) = run(&w1, &Action::place("apple", "table"), None);
        assert!(e.is_ok());
        assert!(w2.gap(0, 1) >= 1.0);
        let (w3, e) = run(&w2, &Action::pick("bowl"), None);
        assert!(e.is_ok(), "{e:?}");
        assert!(w3.dropped.is_empty());
    }

    #[test]
    fn stacked_object_falls() {
        let mut box_ = obj(0, "box", 30.0, 2.0);
        box_.supports = Some(1);
        let w = world(vec![box_, obj(1, "apple", 30.0, 0.8)]);
        let (w1, e) = run(&w, &Action::pick("box"), None);
        assert_eq!(e.kind, EffectKind::ContentsDropped);
        assert_eq!(w1.dropped, vec![1]);
    }

    #[test]
    fn push_moves_riders_and_clamps() {
        let mut bowl = obj(0, "bowl", 62.0, 2.0);
        bowl.is_container = true;
        bowl.contents = vec![1];
        let w = world(vec![bowl, obj(1, "apple", 62.0, 0.8)]);
        let (w1, e) = run(&w, &Action::push("bowl", PushDirection::Right), Some(2));
        assert!(e.is_ok());
        assert_eq!(w1.objects[0].position.x, 64.0);
        assert_eq!(w1.objects[1].position.x, 64.0);
    }

    #[test]
    fn unknown_and_bad_labels() {
        let w = world(vec![obj(0, "apple", 30.0, 1.0)]);
        let (same, e) = run(&w, &Action::pick("pear"), None);
        assert_eq!(e.kind, EffectKind::UnknownObject);
        assert_eq!(same, w);
        assert!(execute(&w, &Action::push("apple", PushDirection::Left), Some(99)).is_err());
    }

    #[test]
    fn placing_into_container_records_contents() {
        let mut box_ = obj(1, "box", 14.0, 3.0);
        box_.is_container = true;
        let w = world(vec![obj(0, "ball", 30.0, 1.0), box_]);
        let (w1, _) = run(&w, &Action::pick("ball"), None);
        let (w2, e) = run(&w1, &Action::place("ball", "box").with_precise_spot(true), Some(1));
        assert!(e.is_ok());
        assert_eq!(w2.objects[1].contents, vec![0]);
    }

    #[test]
    fn disc_mask_covers_center() {
        let m = disc_mask(Point2::new(-3.2, 5.7), 0.1);
        assert!(m.contains(Point2::new(-3.2, 5.7)));
        let big = disc_mask(Point2::new(10.0, 10.0), 2.5);
        assert!(big.count() > 12);
        assert!(big.cell_centers().iter().all(|c| c.distance(&Point2::new(10.0, 10.0)) <= 2.5));
    }
}
