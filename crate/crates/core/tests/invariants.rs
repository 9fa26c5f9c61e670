//! Module invariants under fixed-seed property testing.

mod props;

macro_rules! checks {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                if let Err(e) = props::$name() {
                    panic!("{e}");
                }
            }
        )*
    };
}

checks!(
    annealed_cdf_is_pgf_of_radius_cdf,
    pgf_is_monotone_and_anchored,
    surviving_radius_law_inequality,
    firework_partial_sums_nondecreasing,
    constant_radius_dies,
    w_for_one_station_is_the_radius_tail_sum,
    reverse_extinction_rules_out_firework_survival,
    phi2_below_phi1_and_increasing,
    lower_critical_value_is_the_phi2_root,
    lower_critical_value_nonincreasing_in_p,
    line_runs_match_graph_components,
    raising_radii_never_shrinks_the_run,
    larger_radius_law_couples_upward,
    line_replay,
    tree_runs_match_graph_components,
    quenched_tree_is_replayed_across_process_seeds,
    larger_tree_radii_couple_upward,
    estimates_shrink_with_the_horizon,
    divergent_w_environments_always_reach,
);
