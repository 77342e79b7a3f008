"""Static figure rendering for the experiment harness's CSV artifacts."""
