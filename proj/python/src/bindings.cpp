// Python bindings for the muspike core.

#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "muspike/cli.h"
#include "muspike/error.h"
#include "muspike/lif.h"
#include "muspike/metrics.h"
#include "muspike/midi.h"
#include "muspike/srnn.h"
#include "muspike/stats.h"
#include "muspike/study.h"
#include "muspike/tokenizer.h"

namespace py = pybind11;
using namespace muspike;

namespace {

std::span<const std::uint8_t> as_span(const py::bytes& b) {
  const std::string_view v(b);
  return {reinterpret_cast<const std::uint8_t*>(v.data()), v.size()};
}

py::bytes to_bytes(const std::vector<std::uint8_t>& v) {
  return py::bytes(reinterpret_cast<const char*>(v.data()), v.size());
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  for (int i = 0; i < kNumMetrics; ++i) {
    const auto m = static_cast<Metric>(i);
    d[py::str(std::string(metric_name(m)))] = r[m] ? py::cast(*r[m]) : py::none();
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spiking-network music benchmark core";

  static py::handle error_type = py::exception<Error>(m, "Error").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object inst = py::reinterpret_borrow<py::object>(error_type)(e.what());
      inst.attr("code") = std::string(e.name());
      PyErr_SetObject(error_type.ptr(), inst.ptr());
    }
  });

  // --- scores ---------------------------------------------------------------
  py::class_<Note>(m, "Note")
      .def(py::init([](int pitch, double onset, double duration, int velocity, int track, int channel) {
             return Note{pitch, onset, duration, velocity, track, channel};
           }),
           py::arg("pitch") = 60, py::arg("onset") = 0.0, py::arg("duration") = 0.5, py::arg("velocity") = 64,
           py::arg("track") = 0, py::arg("channel") = 0)
      .def_readwrite("pitch", &Note::pitch)
      .def_readwrite("onset", &Note::onset)
      .def_readwrite("duration", &Note::duration)
      .def_readwrite("velocity", &Note::velocity)
      .def_readwrite("track", &Note::track)
      .def_readwrite("channel", &Note::channel)
      .def(py::self == py::self)
      .def("__repr__", [](const Note& n) {
        std::ostringstream s;
        s << "Note(pitch=" << n.pitch << ", onset=" << n.onset << ", duration=" << n.duration
          << ", velocity=" << n.velocity << ")";
        return s.str();
      });

  py::class_<TempoEvent>(m, "TempoEvent")
      .def(py::init([](double time, double bpm) { return TempoEvent{time, bpm}; }), py::arg("time") = 0.0,
           py::arg("bpm") = 120.0)
      .def_readwrite("time", &TempoEvent::time)
      .def_readwrite("bpm", &TempoEvent::bpm);

  py::class_<TimeSignature>(m, "TimeSignature")
      .def(py::init([](int n, int d) { return TimeSignature{n, d}; }), py::arg("numerator") = 4,
           py::arg("denominator") = 4)
      .def_readwrite("numerator", &TimeSignature::numerator)
      .def_readwrite("denominator", &TimeSignature::denominator);

  py::class_<Score>(m, "Score")
      .def(py::init<>())
      .def_readwrite("notes", &Score::notes)
      .def_readwrite("tempo_map", &Score::tempo_map)
      .def_readwrite("time_signature", &Score::time_signature)
      .def_readwrite("ticks_per_quarter", &Score::ticks_per_quarter)
      .def("normalize", &Score::normalize)
      .def("end_time", &Score::end_time)
      .def(py::self == py::self);

  m.def("parse_midi", [](const py::bytes& b) { return parse_midi(as_span(b)); }, py::arg("data"));
  m.def("write_midi", [](const Score& s) { return to_bytes(write_midi(s)); }, py::arg("score"));
  m.def("trim", &trim, py::arg("score"), py::arg("max_seconds"));
  m.def("render_wav", [](const Score& s, int sr) { return to_bytes(render_wav(s, sr)); }, py::arg("score"),
        py::arg("sample_rate") = 22050);

  // --- tokens ---------------------------------------------------------------
  py::class_<CompoundToken>(m, "CompoundToken")
      .def_static("metric", &CompoundToken::metric, py::arg("tempo"), py::arg("chord"), py::arg("bar_beat"))
      .def_static("note", &CompoundToken::note, py::arg("bar_beat"), py::arg("pitch"), py::arg("duration"),
                  py::arg("velocity"))
      .def_static("eos", &CompoundToken::eos)
      .def("values", [](const CompoundToken& t) {
        const auto v = t.values();
        return std::vector<int>(v.begin(), v.end());
      })
      .def(py::self == py::self)
      .def("__repr__", [](const CompoundToken& t) {
        std::ostringstream s;
        s << "CompoundToken(";
        const auto v = t.values();
        for (int i = 0; i < kNumFields; ++i) s << (i ? ", " : "") << v[i];
        s << ")";
        return s.str();
      });

  py::class_<Vocab>(m, "Vocab")
      .def_property_readonly("resolution", &Vocab::resolution)
      .def("sizes", [](const Vocab& v) {
        const auto s = v.sizes();
        return std::vector<int>(s.begin(), s.end());
      })
      .def("serialize", &Vocab::serialize)
      .def_static("parse", [](const std::string& text) { return Vocab::parse(text); })
      .def(py::self == py::self);

  m.def(
      "encode", [](const Score& s, int resolution) { return encode(quantize(s, resolution)); }, py::arg("score"),
      py::arg("resolution") = 4, "Quantize and encode a score as compound tokens.");
  m.def("decode", [](const std::vector<CompoundToken>& t, const Vocab& v) { return decode(t, v); }, py::arg("tokens"),
        py::arg("vocab"));
  m.def(
      "build_vocab",
      [](const std::vector<std::vector<CompoundToken>>& seqs, int res) { return build_vocab_from_tokens(seqs, res); },
      py::arg("sequences"), py::arg("resolution") = 4);

  // --- neurons and model ----------------------------------------------------
  py::class_<LIFParams>(m, "LIFParams")
      .def(py::init<double, double, double, double>(), py::arg("tau_m") = 2.0, py::arg("v_th") = 0.5,
           py::arg("v_reset") = 0.0, py::arg("r") = 1.0)
      .def_property_readonly("tau_m", &LIFParams::tau_m)
      .def_property_readonly("v_th", &LIFParams::v_th);

  m.def(
      "lif_step",
      [](std::vector<double> v, const std::vector<double>& current, const LIFParams& p) {
        LIFState s(v.size(), 0.0);
        s.v = std::move(v);
        auto r = lif_step(s, current, p);
        return py::make_tuple(r.state.v, std::vector<int>(r.spikes.begin(), r.spikes.end()));
      },
      py::arg("v"), py::arg("current"), py::arg("params"), "One Euler step; returns (v, spikes).");
  m.def("atan_surrogate_grad", &atan_surrogate_grad, py::arg("u"), py::arg("alpha") = 2.0);

  py::class_<ToySRNN>(m, "ToySRNN")
      .def(py::init([](const std::vector<std::vector<CompoundToken>>& corpus, int hidden, int enc_dim, double lr,
                       std::uint64_t seed, int resolution) {
             ToySRNNConfig cfg;
             cfg.hidden = hidden;
             cfg.enc_dim = enc_dim;
             cfg.learning_rate = lr;
             cfg.seed = seed;
             return ToySRNN(cfg, build_vocab_from_tokens(corpus, resolution));
           }),
           py::arg("corpus"), py::arg("hidden") = 256, py::arg("enc_dim") = 256, py::arg("learning_rate") = 0.05,
           py::arg("seed") = 0, py::arg("resolution") = 4, "Fresh model whose vocabulary covers `corpus`.")
      .def_property_readonly("vocab", &ToySRNN::vocab)
      .def_property_readonly("num_parameters", [](const ToySRNN& m) { return m.parameters().size(); })
      .def(
          "loss",
          [](const ToySRNN& m, const std::vector<CompoundToken>& seq) { return m.loss(m.to_indices(seq)); },
          py::arg("tokens"))
      .def(
          "generate",
          [](const ToySRNN& m, const std::vector<CompoundToken>& prompt, int length, double temperature,
             std::uint64_t seed) { return generate(m, prompt, {length, temperature, seed}); },
          py::arg("prompt"), py::arg("length") = 64, py::arg("temperature") = 1.0, py::arg("seed") = 0)
      .def("save", [](const ToySRNN& m) { return to_bytes(save_checkpoint(m)); })
      .def_static("load", [](const py::bytes& b) { return load_checkpoint(as_span(b)); }, py::arg("data"));

  m.def(
      "train_toy",
      [](const ToySRNN& model, const std::vector<std::vector<CompoundToken>>& corpus, int epochs) {
        py::gil_scoped_release nogil;
        auto r = train_toy(model, corpus, epochs);
        py::gil_scoped_acquire gil;
        return py::make_tuple(std::move(r.model), r.loss_curve, r.accuracy.overall);
      },
      py::arg("model"), py::arg("corpus"), py::arg("epochs"),
      "Returns (trained model, loss curve, next-token field accuracy).");

  // --- metrics --------------------------------------------------------------
  m.def(
      "evaluate",
      [](const Score& s, int resolution, bool infer) {
        EvalOptions o;
        o.resolution = resolution;
        o.infer_chords = infer;
        return report_dict(evaluate_all(s, o));
      },
      py::arg("score"), py::arg("resolution") = 4, py::arg("infer_chords") = true,
      "All objective metrics; None where a metric is undefined for the score.");
  m.def("nltm_matrix", [](const Score& s, int resolution) { return nltm(quantize(s, resolution)).matrix; },
        py::arg("score"), py::arg("resolution") = 4);
  m.def("pitch_entropy", &pitch_entropy, py::arg("score"));
  m.def("pitch_class_entropy", &pitch_class_entropy, py::arg("score"));

  // --- statistics -----------------------------------------------------------
  py::class_<AnovaResult>(m, "AnovaResult")
      .def_readonly("f", &AnovaResult::f)
      .def_readonly("p", &AnovaResult::p)
      .def_readonly("df_between", &AnovaResult::df_between)
      .def_readonly("df_within", &AnovaResult::df_within);
  py::class_<TukeyResult>(m, "TukeyResult")
      .def_readonly("a", &TukeyResult::a)
      .def_readonly("b", &TukeyResult::b)
      .def_readonly("mean_diff", &TukeyResult::mean_diff)
      .def_readonly("q", &TukeyResult::q)
      .def_readonly("p", &TukeyResult::p)
      .def_readonly("significant", &TukeyResult::significant);

  m.def(
      "anova_oneway", [](const std::vector<std::vector<double>>& g) { return anova_oneway(g); }, py::arg("groups"));
  m.def(
      "tukey_hsd",
      [](const std::vector<std::vector<double>>& g, const std::vector<std::string>& labels, double alpha) {
        return tukey_hsd(g, labels, alpha);
      },
      py::arg("groups"), py::arg("labels"), py::arg("alpha") = 0.05);
  m.def("ptukey", &ptukey, py::arg("q"), py::arg("k"), py::arg("df"));
  m.def("f_sf", &f_sf, py::arg("f"), py::arg("df1"), py::arg("df2"));
  m.def(
      "analyze",
      [](const std::string& csv, bool per_participant, double alpha) {
        const auto a = analyze(read_responses_csv(csv), {alpha, per_participant});
        py::dict d;
        d["descriptives"] = write_descriptives_csv(a.descriptives);
        d["anova"] = write_anova_csv(a.anova);
        d["tukey"] = write_tukey_csv(a.tukey);
        d["turing"] = write_turing_csv(a.turing);
        return d;
      },
      py::arg("responses_csv"), py::arg("per_participant") = false, py::arg("alpha") = 0.05,
      "Analysis tables (as CSV text) for a study response export.");

  // --- study ----------------------------------------------------------------
  m.def(
      "curate_synthetic",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& c : study::curate(study::synthetic_catalog(seed), {.seed = seed})) {
          py::dict d;
          d["id"] = c.piece.id;
          d["dataset"] = c.piece.dataset;
          d["source"] = c.piece.source;
          d["duration"] = c.piece.duration;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 1, "Curated piece list drawn from a generated catalog.");
  m.def(
      "create_study",
      [](const std::filesystem::path& dir, std::uint64_t seed, std::array<int, 3> cohort, std::array<int, 4> quota,
         int sample_rate) {
        study::StudyConfig cfg;
        cfg.seed = seed;
        cfg.cohort = cohort;
        cfg.quota = {quota[0], {quota[1], quota[2], quota[3]}};
        py::gil_scoped_release nogil;
        study::Study::create(dir, study::curate(study::synthetic_catalog(seed), {.seed = seed}), cfg, sample_rate);
      },
      py::arg("dir"), py::arg("seed") = 1, py::arg("cohort") = std::array<int, 3>{48, 15, 13},
      py::arg("quota") = std::array<int, 4>{24, 16, 4, 4}, py::arg("sample_rate") = 0);
  m.def(
      "simulate",
      [](const std::filesystem::path& dir, std::array<int, 3> participants, std::uint64_t seed, double crash_at) {
        study::SimulationOptions o;
        o.cohort = participants;
        o.seed = seed;
        o.crash_at = crash_at;
        study::SimulationReport r;
        {
          py::gil_scoped_release nogil;
          r = study::simulate(dir, o);
        }
        py::dict d;
        d["participants"] = r.participants;
        d["responses"] = r.responses;
        d["quotas_met"] = r.quotas_met;
        d["min_total"] = r.min_total;
        d["min_group"] = r.min_group;
        d["replay_matches"] = r.replay_matches;
        d["crashed"] = r.crashed;
        d["responses_before_crash"] = r.responses_before_crash;
        d["responses_after_restart"] = r.responses_after_restart;
        return d;
      },
      py::arg("dir"), py::arg("participants") = std::array<int, 3>{48, 15, 13}, py::arg("seed") = 1,
      py::arg("crash_at") = -1.0);
  m.def(
      "export_responses",
      [](const std::filesystem::path& dir) { return write_responses_csv(study::Study::open(dir)->export_rows()); },
      py::arg("dir"));

  // --- command line ---------------------------------------------------------
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release nogil;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the muspike command line; returns (exit code, stdout, stderr).");
}
