#pragma once

#include <filesystem>
#include <fstream>
#include <thread>
#include <vector>

#if defined(__linux__)
#include <fcntl.h>
#include <unistd.h>
#endif

#include "provenance/common.hpp"
#include "provenance/features.hpp"
#include "provenance/index.hpp"

namespace provenance {

struct IngestOptions {
    std::size_t queue_capacity = 64;  // items buffered between stages
    std::size_t encode_workers = 1;   // threads encoding within a batch
};

namespace detail {

// Hints the kernel to pull the file into the page cache.
inline void prefetch_file(const std::filesystem::path& path) {
#if defined(__linux__)
    int fd = ::open(path.c_str(), O_RDONLY);
    if (fd >= 0) {
        ::posix_fadvise(fd, 0, 0, POSIX_FADV_WILLNEED);
        ::close(fd);
    }
#else
    (void)path;
#endif
}

}  // namespace detail

/// Four-stage producer-consumer ingestion of per-image feature files:
///   touch (prefetch) -> read -> assemble batches of batch_B -> rotate, encode, append.
/// Stages are single threads joined by bounded queues, so features reach the
/// index in file order and ids are identical to a sequential add.
inline IngestionReport ingest_feature_files(IvfadcIndex& index, const std::vector<std::filesystem::path>& files,
                                            const IngestOptions& opts = {}) {
    if (!index.trained()) throw std::logic_error("ingest: index is not trained");
    const std::size_t batch_size = index.config().batch_B;

    BoundedQueue<std::filesystem::path> touched(opts.queue_capacity);
    BoundedQueue<FeatureSet> loaded(opts.queue_capacity);
    BoundedQueue<std::vector<LabeledFeature>> batches(std::max<std::size_t>(2, opts.queue_capacity / 16));

    std::exception_ptr error;
    std::mutex error_mutex;
    auto fail = [&](std::exception_ptr e) {
        std::lock_guard lock(error_mutex);
        if (!error) error = e;
        touched.close();
        loaded.close();
        batches.close();
    };

    std::thread toucher([&] {
        try {
            for (const auto& f : files) {
                detail::prefetch_file(f);
                if (!touched.push(f)) return;
            }
        } catch (...) {
            fail(std::current_exception());
        }
        touched.close();
    });

    std::thread reader([&] {
        try {
            while (auto path = touched.pop()) {
                if (!loaded.push(load_features(*path))) return;
            }
        } catch (...) {
            fail(std::current_exception());
        }
        loaded.close();
    });

    std::thread batcher([&] {
        try {
            std::vector<LabeledFeature> batch;
            batch.reserve(std::min<std::size_t>(batch_size, 1 << 20));
            while (auto fs = loaded.pop()) {
                for (const auto& d : fs->descriptors) {
                    batch.push_back({fs->image_id, d});
                    if (batch.size() == batch_size) {
                        if (!batches.push(std::move(batch))) return;
                        batch = {};
                    }
                }
            }
            if (!batch.empty()) batches.push(std::move(batch));
        } catch (...) {
            fail(std::current_exception());
        }
        batches.close();
    });

    IngestionReport report;
    try {
        std::vector<IvfadcIndex::Encoded> encoded;
        while (auto batch = batches.pop()) {
            encoded.resize(batch->size());
            parallel_for(batch->size(), opts.encode_workers,
                         [&](std::size_t i) { encoded[i] = index.encode((*batch)[i].descriptor); });
            index.append_encoded(*batch, encoded);
            report.added += batch->size();
            report.batch_sizes.push_back(batch->size());
        }
    } catch (...) {
        fail(std::current_exception());
    }
    toucher.join();
    reader.join();
    batcher.join();
    if (error) std::rethrow_exception(error);
    return report;
}

}  // namespace provenance
