/* Copyright (c) The Move Contributors
 * SPDX-License-Identifier: Apache-2.0 */

#include <stdio.h>
#include <string.h>
#include "robustmove.h"

static const char *SRC =
    "module 0x1 OwnedVector\n"
    "struct OwnedVec { v: u64, owner: address }\n"
    "proc get_mut(&mut OwnedVec) -> (&mut u64) public:\n"
    " BorrowFld OwnedVec.v\n"
    " Ret\n";

int main(void) {
    RmEnv *env = NULL;
    if (rm_env_parse(SRC, &env) != RM_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", rm_last_error());
        return 1;
    }
    size_t flagged = 0;
    char *report = NULL;
    if (rm_analyze(env, NULL, true, &flagged, &report) != RM_STATUS_OK) {
        fprintf(stderr, "analyze: %s\n", rm_last_error());
        return 1;
    }
    printf("%zu %s", flagged, report);
    rm_string_free(report);
    rm_env_free(env);
    if (rm_env_parse("nonsense", &env) != RM_STATUS_PARSE_ERROR || rm_last_error() == NULL) {
        return 1;
    }
    return 0;
}
