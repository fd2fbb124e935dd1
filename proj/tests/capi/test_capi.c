#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include <thinkstop/thinkstop.h>

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

#define EXPECT_OK(call)                                                               \
  do {                                                                                \
    ts_status s_ = (call);                                                            \
    if (s_ != TS_OK) {                                                                \
      fprintf(stderr, "%s:%d: %s -> %d (%s)\n", __FILE__, __LINE__, #call, (int)s_, \
              ts_last_error());                                                       \
      ++failures;                                                                     \
    }                                                                                 \
  } while (0)

static void test_metrics(void) {
  const char* labels[] = {"A", "A", "B", "A", "B", "B"};
  const int64_t cum[] = {0, 10, 20, 30, 40, 60};
  ts_trajectory* t = NULL;
  ts_metrics m;
  ts_metrics_config cfg = {1, 1, 0.0};

  EXPECT_OK(ts_trajectory_create("c1", "mcq", labels, cum, 6, &t));
  EXPECT(ts_trajectory_steps(t) == 6);
  EXPECT(strcmp(ts_trajectory_label(t, 2), "B") == 0);
  EXPECT(ts_trajectory_label(t, 6) == NULL);

  EXPECT_OK(ts_trajectory_metrics(t, &cfg, &m));
  EXPECT(m.t_star_raw == 3);
  EXPECT(m.switches_raw == 3);
  EXPECT(m.tafs == 2);
  EXPECT(m.t_after_raw == 20);
  EXPECT(m.t_total == 60);
  EXPECT(m.switches_denoised == m.switches_raw);

  EXPECT_OK(ts_trajectory_metrics(t, NULL, &m));
  /* hold-for-3 never confirms B here */
  EXPECT(m.t_star_denoised == -1);
  EXPECT(m.switches_denoised == 0);

  {
    ts_trajectory* smooth = NULL;
    EXPECT_OK(ts_trajectory_hold_for_k(t, 0.9, 2, &smooth));
    /* AABABB -> AAAAAB */
    EXPECT(strcmp(ts_trajectory_label(smooth, 4), "A") == 0);
    EXPECT(strcmp(ts_trajectory_label(smooth, 5), "B") == 0);
    ts_trajectory_free(smooth);
  }
  ts_trajectory_free(t);

  {
    const int64_t bad_cum[] = {5, 10};
    EXPECT(ts_trajectory_create("c2", "mcq", labels, bad_cum, 2, &t) == TS_ERR_DATA);
    EXPECT(strlen(ts_last_error()) > 0);
    EXPECT(ts_trajectory_create("c2", "poem", labels, cum, 2, &t) == TS_ERR_ARGUMENT);
    EXPECT(ts_trajectory_create(NULL, "mcq", labels, cum, 2, &t) == TS_ERR_ARGUMENT);
    EXPECT(ts_trajectory_metrics(NULL, NULL, &m) == TS_ERR_ARGUMENT);
  }
}

static void test_queries(void) {
  /* q0 and q1 agree (cos 0.96), q2 is orthogonal */
  const float emb[] = {1.0f, 0.0f, 0.96f, 0.28f, 0.0f, 1.0f};
  const int64_t cum[] = {0, 3, 9};
  ts_trajectory* t = NULL;
  ts_metrics m;
  ts_metrics_config cfg = {1, 1, 0.9};
  EXPECT_OK(ts_trajectory_create_queries("q", emb, 2, NULL, cum, 3, &t));
  EXPECT_OK(ts_trajectory_metrics(t, &cfg, &m));
  EXPECT(m.switches_raw == 1);
  EXPECT(m.t_star_raw == 1);
  cfg.gamma = 0.99;
  EXPECT_OK(ts_trajectory_metrics(t, &cfg, &m));
  EXPECT(m.switches_raw == 2);
  ts_trajectory_free(t);
}

static void test_dump_and_probe(void) {
  float data[2 * 3 * 4];
  double w[4] = {0.5, -1.0, 0.25, 2.0};
  double scores[2];
  double s = 0.0;
  uint32_t layers = 0, dim = 0, steps = 0;
  ts_dump* d = NULL;
  ts_probe* p = NULL;
  ts_probe* q = NULL;
  size_t i;

  for (i = 0; i < sizeof data / sizeof data[0]; ++i) data[i] = (float)i * 0.125f - 1.0f;
  EXPECT_OK(ts_dump_write("capi_dump.hsd", 3, 4, 2, data));
  EXPECT_OK(ts_dump_read("capi_dump.hsd", &d));
  ts_dump_shape(d, &layers, &dim, &steps);
  EXPECT(layers == 3 && dim == 4 && steps == 2);
  EXPECT(memcmp(ts_dump_data(d), data, sizeof data) == 0);

  EXPECT_OK(ts_probe_create(1, w, 4, -0.5, &p));
  EXPECT_OK(ts_probe_save(p, "capi_probe.prb"));
  EXPECT_OK(ts_probe_load("capi_probe.prb", &q));
  EXPECT(ts_probe_layer(q) == 1);
  EXPECT(ts_probe_dim(q) == 4);

  EXPECT_OK(ts_probe_score_dump(q, d, scores, 2));
  {
    /* step 1, layer 1 starts at float (1*3 + 1) * 4 */
    const float* h = data + 16;
    double z = -0.5;
    double hd[4];
    for (i = 0; i < 4; ++i) {
      z += w[i] * h[i];
      hd[i] = h[i];
    }
    EXPECT(fabs(scores[1] - 1.0 / (1.0 + exp(-z))) < 1e-12);
    EXPECT_OK(ts_probe_score(q, hd, 4, &s));
    EXPECT(fabs(s - scores[1]) < 1e-12);
  }
  EXPECT(ts_probe_score_dump(q, d, scores, 1) == TS_ERR_ARGUMENT);
  EXPECT(ts_probe_score(q, w, 3, &s) == TS_ERR_ARGUMENT);
  EXPECT(ts_dump_read("no_such_dump.hsd", &d) != TS_OK);

  ts_probe_free(p);
  ts_probe_free(q);
  ts_dump_free(d);
}

static void test_gates(void) {
  const double m[] = {0.1, 0.6, 0.4, 0.9};
  int64_t idx = 0;
  double a = 0, b = 0;
  EXPECT_OK(ts_stop_index(m, 4, 0.5, &idx));
  EXPECT(idx == 1);
  EXPECT_OK(ts_stop_index(m, 4, 0.95, &idx));
  EXPECT(idx == -1);
  EXPECT(ts_stop_index(m, 4, NAN, &idx) == TS_ERR_ARGUMENT);
  EXPECT_OK(ts_random_gate_score("x", 3, 1, &a));
  EXPECT_OK(ts_random_gate_score("x", 3, 1, &b));
  EXPECT(a == b && a >= 0.0 && a < 1.0);
  EXPECT_OK(ts_random_gate_score("x", 4, 1, &b));
  EXPECT(a != b);
}

static int log_lines = 0;
static void count_lines(const char* line, void* user) {
  (void)line;
  ++*(int*)user;
}

static void test_pipelines(void) {
  ts_metrics_options mo;
  ts_frontier_options fo;
  FILE* f;
  memset(&mo, 0, sizeof mo);
  mo.traces = THINKSTOP_FIXTURES_DIR "/metrics5";
  mo.out_dir = "capi_metrics";
  mo.k = 3;
  mo.gamma = 0.9;
  mo.bootstrap_resamples = 200;
  EXPECT_OK(ts_metrics_run(&mo, count_lines, &log_lines));
  f = fopen("capi_metrics/summary.tsv", "r");
  EXPECT(f != NULL);
  if (f) fclose(f);

  mo.traces = "no/such/dir";
  EXPECT(ts_metrics_run(&mo, NULL, NULL) == TS_ERR_DATA);
  mo.traces = THINKSTOP_FIXTURES_DIR "/metrics5";
  mo.gamma = 2.0;
  EXPECT(ts_metrics_run(&mo, NULL, NULL) == TS_ERR_CONFIG);

  memset(&fo, 0, sizeof fo);
  fo.traces = THINKSTOP_FIXTURES_DIR "/mcq50";
  fo.gate = "oracle";
  fo.out_dir = "capi_frontier";
  fo.gamma = 0.9;
  EXPECT_OK(ts_frontier(&fo, NULL, NULL));
  fo.gate = "nope";
  EXPECT(ts_frontier(&fo, NULL, NULL) == TS_ERR_CONFIG);
}

int main(void) {
  EXPECT(ts_version() != NULL && strlen(ts_version()) > 0);
  test_metrics();
  test_queries();
  test_dump_and_probe();
  test_gates();
  test_pipelines();
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("C interface: all checks passed\n");
  return 0;
}
