// probe: is window_at_coord at level 20 slow?
use std::sync::Arc;
use std::time::Instant;
use msgame_core::dynamics::preset_cat2;
use msgame_core::exact::ExactTorusPoint;
use msgame_core::tiling::{Tiling, TilingParams};

fn main() {
    let model = Arc::new(preset_cat2().unwrap());
    let t = Tiling::build(model, ExactTorusPoint::from_f64s(&[0.0,0.0]), TilingParams::default(), 2).unwrap();
    let t0 = Instant::now();
    let (w, idx) = t.window_at_coord(&[0.0137339828391], 20).unwrap();
    println!("level20 window: {} sites, idx {}, {:?}", w.len(), idx, t0.elapsed());
    let atom = w.atom(idx);
    let t1 = Instant::now();
    let cs = t.enumerate_within(&atom, 3).unwrap();
    println!("children: {} contained, {:?}", cs.contained.len(), t1.elapsed());
}
