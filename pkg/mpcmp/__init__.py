# mpcmp - Unconditionally secure multiparty comparison over Shamir shares
