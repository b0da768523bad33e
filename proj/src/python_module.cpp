#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "srn/errors.hpp"
#include "srn/gradient_suite.hpp"
#include "srn/harness.hpp"

namespace py = pybind11;
using namespace srn;

namespace {

py::array_t<std::uint8_t> to_array(const GrayImage& img) {
  py::array_t<std::uint8_t> out({img.height, img.width});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

GrayImage from_array(const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw DimensionError("image must be a 2-d uint8 array");
  GrayImage img{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}};
  img.pixels.assign(a.data(), a.data() + a.size());
  return img;
}

struct TrainOutcome {
  std::vector<std::string> log;
  double test_word_accuracy = 0;
  double test_char_accuracy = 0;
};

TrainOutcome train_run(const std::string& config_text, const std::string& checkpoint_path) {
  auto config = RunConfig::parse(config_text);
  const auto data = make_splits(config);
  Trainer trainer(config, data.train, data.val);
  TrainOutcome out;
  {
    py::gil_scoped_release release;
    for (const auto& m : trainer.run()) out.log.push_back(m.line());
  }
  const auto test = evaluate(trainer.model(), data.test);
  out.test_word_accuracy = test.word_accuracy;
  out.test_char_accuracy = test.char_accuracy;
  if (!checkpoint_path.empty())
    Checkpoint::capture(trainer.model(), config, data.train.charset, trainer.step_count())
        .save(checkpoint_path);
  return out;
}

}  // namespace

PYBIND11_MODULE(_srn, m) {
  m.doc() = "Semantic reasoning network scene-text recognizer";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);

  py::class_<Charset>(m, "Charset")
      .def(py::init<std::string, std::vector<std::pair<char, char>>>(), py::arg("symbols"),
           py::arg("confusions") = std::vector<std::pair<char, char>>{})
      .def_static("standard", &Charset::standard)
      .def_readonly("symbols", &Charset::symbols)
      .def_readonly("confusions", &Charset::confusions)
      .def_property_readonly("num_classes", &Charset::num_classes)
      .def_property_readonly("eos", &Charset::eos)
      .def("encode", [](const Charset& c, const std::string& w, std::size_t n) { return encode_labels(w, c, n); })
      .def("decode", [](const Charset& c, const std::vector<int>& labels) { return decode_labels(labels, c); });

  m.def(
      "render_word",
      [](const std::string& word, std::uint64_t seed, double noise, double confusability,
         std::size_t height, std::size_t width, const Charset& charset) {
        RenderOptions opt;
        opt.noise = noise;
        opt.confusability = confusability;
        opt.height = height;
        opt.width = width;
        return to_array(render_word(word, charset, seed, opt));
      },
      py::arg("word"), py::arg("seed"), py::arg("noise") = 0.35, py::arg("confusability") = 0.7,
      py::arg("height") = 16, py::arg("width") = 64, py::arg("charset") = Charset::standard());

  m.def("generate_lexicon", &generate_lexicon, py::arg("charset"), py::arg("count"),
        py::arg("min_len"), py::arg("max_len"), py::arg("seed"));
  m.def("check_disambiguation", &check_disambiguation);
  m.def("write_pgm", [](const std::filesystem::path& p, py::array_t<std::uint8_t> a) { write_pgm(p, from_array(a)); });
  m.def("read_pgm", [](const std::filesystem::path& p) { return to_array(read_pgm(p)); });

  m.def("normalize_config", [](const std::string& text) { return RunConfig::parse(text).serialize(); },
        "Parse key=value text and return the full configuration it describes.");

  m.def("edit_distance", [](const std::vector<int>& a, const std::vector<int>& b) { return edit_distance(a, b); });
  m.def(
      "score",
      [](const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& gold) {
        auto s = score_predictions(pred, gold);
        return std::make_pair(s.word_accuracy, s.char_accuracy);
      },
      "Word and character accuracy of predicted label sequences.");

  m.def(
      "gradient_check",
      [](std::size_t instances, std::uint64_t seed, const std::vector<std::string>& modules) {
        std::vector<ModuleGradResult> results;
        {
          py::gil_scoped_release release;
          results = gradient_suite(instances, seed, modules);
        }
        py::list out;
        for (const auto& r : results) {
          py::dict d;
          d["module"] = r.module;
          d["instances"] = r.instances;
          d["passed"] = r.passed;
          d["probes"] = r.probes;
          d["skipped"] = r.skipped;
          d["max_rel_error"] = r.max_rel_error;
          d["seconds"] = r.seconds;
          out.append(d);
        }
        return out;
      },
      py::arg("instances") = 20, py::arg("seed") = 1, py::arg("modules") = std::vector<std::string>{});

  py::class_<TrainOutcome>(m, "TrainOutcome")
      .def_readonly("log", &TrainOutcome::log)
      .def_readonly("test_word_accuracy", &TrainOutcome::test_word_accuracy)
      .def_readonly("test_char_accuracy", &TrainOutcome::test_char_accuracy);
  m.def("train", &train_run, py::arg("config_text") = "", py::arg("checkpoint") = "",
        "Render the configured dataset in memory, train, score the test split and optionally save a checkpoint.");

  m.def(
      "infer",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& image, bool dump,
         const std::filesystem::path& out_dir) {
        auto r = infer(Checkpoint::load(checkpoint), image, dump, out_dir);
        return std::make_pair(r.text, r.attention_files);
      },
      py::arg("checkpoint"), py::arg("image"), py::arg("dump_attention") = false,
      py::arg("out_dir") = std::filesystem::path("."));
}
