/*
 * C interface to the kiln column store.
 *
 * Buffers are always owned by the caller. Handles are 64-bit values packing
 * (generation << 32) | index; the class id is passed alongside them.
 * Functions returning int64_t give a non-negative result on success and a
 * negative KILN_E* code on failure.
 *
 * crossing_count() reports how many times batch_read and batch_write have
 * been called on the store, including calls that failed.
 */
#ifndef KILN_BRIDGE_H
#define KILN_BRIDGE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define KILN_OK 0
#define KILN_ENULL (-1)
#define KILN_EINVAL (-2)
#define KILN_EUNKNOWN_CLASS (-3)
#define KILN_EUNKNOWN_FIELD (-4)
#define KILN_ESTALE (-5)
#define KILN_ESHAPE (-6)
#define KILN_ETYPE (-7)
#define KILN_EDUPLICATE (-8)
#define KILN_EPANIC (-9)

/* Lane codes for register_class. Only KILN_LANE_PACKED4F32 accepts 1..4
 * components; every other lane takes exactly 1. */
#define KILN_LANE_F32 0u
#define KILN_LANE_F64 1u
#define KILN_LANE_I32 2u
#define KILN_LANE_I64 3u
#define KILN_LANE_BOOL 4u
#define KILN_LANE_PACKED4F32 5u

typedef struct KilnStore KilnStore;

/* Never returns NULL. Release with close_store. */
KilnStore *open_store(void);

/* Accepts NULL. */
void close_store(KilnStore *store);

/* Field i has lane lane_codes[i] and components[i] components.
 * Returns the new class id. */
int64_t register_class(KilnStore *store, const uint32_t *lane_codes, const uint8_t *components,
                       size_t field_count);

/* Writes count packed handles to out_handles. Returns count. */
int64_t create_handles(KilnStore *store, uint32_t class_id, size_t count, uint64_t *out_handles);

/* All or nothing: fails with KILN_ESTALE if any handle is stale or repeated.
 * Returns count. */
int64_t destroy_handles(KilnStore *store, uint32_t class_id, const uint64_t *handles, size_t count);

/* Gathers field `field` (its declaration index) of each handle into out as
 * row-major floats; out_len must equal count * components. Stale rows read
 * as zero and get 0 in live_mask, which may be NULL. Returns live rows. */
int64_t batch_read(KilnStore *store, uint32_t class_id, uint32_t field, const uint64_t *handles, size_t count,
                   float *out, size_t out_len, uint8_t *live_mask);

/* Scatters values (count * components floats) into field `field`. Stale
 * handles are skipped. Returns rows written. */
int64_t batch_write(KilnStore *store, uint32_t class_id, uint32_t field, const uint64_t *handles, size_t count,
                    const float *values, size_t values_len);

/* Returns 0 for NULL. */
uint64_t crossing_count(const KilnStore *store);

#ifdef __cplusplus
}
#endif

#endif /* KILN_BRIDGE_H */
