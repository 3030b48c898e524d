//! Every example runs to completion.

#[path = "../examples/simulate_field.rs"]
mod simulate_field;
#[path = "../examples/path_projection.rs"]
mod path_projection;
#[path = "../examples/gradient_check.rs"]
mod gradient_check;
#[path = "../examples/overfit.rs"]
mod overfit;
#[path = "../examples/train_and_evaluate.rs"]
mod train_and_evaluate;
#[path = "../examples/ablation_grid.rs"]
mod ablation_grid;
#[path = "../examples/monitor_stream.rs"]
mod monitor_stream;
#[path = "../examples/score_density.rs"]
mod score_density;
#[path = "../examples/cli_pipeline.rs"]
mod cli_pipeline;

macro_rules! example_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                $name::run_example().unwrap();
            }
        )*
    };
}

example_tests!(
    simulate_field,
    path_projection,
    gradient_check,
    overfit,
    train_and_evaluate,
    ablation_grid,
    monitor_stream,
    score_density,
    cli_pipeline,
);
