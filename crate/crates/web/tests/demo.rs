use gridhtm_web::{traffic_pixel_stats, GridDemo, EVENT_AT, FRAME};

#[test]
fn demo_runs_in_batches_and_paints_frames() {
    let mut demo = GridDemo::new(true, false, 0.0).unwrap();
    assert_eq!(demo.total_frames(), EVENT_AT + 140);
    assert_eq!(demo.advance(50).unwrap(), 50);
    assert_eq!(demo.advance(10_000).unwrap(), demo.total_frames());
    let nz = demo.nonzero_mean_series();
    let mean = demo.mean_series();
    assert_eq!(nz.len(), demo.total_frames());
    assert!(nz.iter().zip(&mean).all(|(a, b)| a >= b));
    let pixels = FRAME.0 * FRAME.1 * 4;
    assert_eq!(demo.heatmap_rgba(0).len(), pixels);
    assert_eq!(demo.mask_rgba(0).len(), pixels);
    assert_eq!(&demo.heatmap_rgba(0)[..4], &[255, 0, 0, 255]);
    assert!(demo.heatmap_rgba(demo.total_frames()).is_empty());
    // The freeze shows up in the non-zero mean after the blob has been learned.
    let window = nz[EVENT_AT..EVENT_AT + 20].iter().cloned().fold(0.0, f64::max);
    assert!(window > nz[EVENT_AT - 20..EVENT_AT].iter().cloned().fold(0.0, f64::max));
}

#[test]
fn skip_lengthens_the_timeline_not_the_output() {
    let plain = GridDemo::new(false, false, 0.0).unwrap();
    let skipped = GridDemo::new(false, true, 0.0).unwrap();
    assert_eq!(plain.total_frames(), skipped.total_frames());
}

#[test]
fn empty_pattern_lowers_the_spread_in_the_lane() {
    let on = traffic_pixel_stats(0.005, true).unwrap();
    let off = traffic_pixel_stats(0.005, false).unwrap();
    assert_eq!(on.len(), 2 * 24);
    let lane_cell = 8 + 4;
    assert!(on[2 * lane_cell + 1] < off[2 * lane_cell + 1]);
}
